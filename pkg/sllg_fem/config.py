"""
sllg_fem.config module.
"""
import json
import logging
import math
import os
from enum import Enum
from gettext import gettext
from typing import Any, Dict, List, Optional, Tuple, Union

import click
from pydantic import BaseModel, Extra, Field, root_validator, validator

from sllg_fem.constants import DEFAULT_SEED, DEFAULT_SOLVER_TOLERANCE, DEFAULT_THETA, NOISE_MODULUS_TOLERANCE
from sllg_fem.g_algebra import NOISE_CATALOG
from sllg_fem.scheme import SchemeParams

LOG = logging.getLogger(__name__)

MAX_SEED = 2**64


class ConfigError(Exception):
    """
    Raised when a configuration file can't be read or describes an invalid run.
    """


class KRule(str, Enum):
    """
    Class to enumerate the time step rules relative to the mesh size h = 1/n.
    """

    H = "h"
    H2 = "h/2"
    H4 = "h/4"

    @property
    def divisor(self) -> int:
        """
        k = h / divisor.
        """
        return {self.H.value: 1, self.H2.value: 2, self.H4.value: 4}[self.value]

    def display_name(self):
        """
        Returns a friendly display name.
        """
        return {
            self.H.value: gettext("k = h"),
            self.H2.value: gettext("k = h/2"),
            self.H4.value: gettext("k = h/4"),
        }.get(self.value, self.value)


class LogLevelEnum(str, Enum):
    """
    Class to enumerate the log levels.
    """

    DEBUG = logging.getLevelName(logging.DEBUG)
    INFO = logging.getLevelName(logging.INFO)
    WARNING = logging.getLevelName(logging.WARNING)
    ERROR = logging.getLevelName(logging.ERROR)
    CRITICAL = logging.getLevelName(logging.CRITICAL)

    def display_name(self):
        """
        Returns a friendly display name.
        """
        return {
            self.DEBUG.value: gettext("Debug"),
            self.INFO.value: gettext("Info"),
            self.WARNING.value: gettext("Warning"),
            self.ERROR.value: gettext("Error"),
            self.CRITICAL.value: gettext("Critical"),
        }.get(self.value, self.value)


def parse_g(value: str) -> Union[Tuple[float, float, float], str]:
    """
    Parses a noise coefficient option: "gx,gy,gz" for a constant unit vector, or an analytic catalog id.
    """
    value = value.strip()
    if value in NOISE_CATALOG:
        return value
    parts = value.split(",")
    if len(parts) != 3:
        raise ValueError(f"g must be 'gx,gy,gz' or one of {', '.join(sorted(NOISE_CATALOG))}, got '{value}'")
    try:
        vector = tuple(float(part) for part in parts)
    except ValueError as ex:
        raise ValueError(f"g components must be numbers, got '{value}'") from ex
    modulus = math.sqrt(sum(x * x for x in vector))
    if abs(modulus - 1.0) > NOISE_MODULUS_TOLERANCE:
        raise ValueError(f"constant g must be a unit vector, got modulus {modulus:.12g}")
    return vector  # type: ignore[return-value]


class SimulationConfig(BaseModel):
    """
    SimulationConfig class.
    """

    n: int = Field(default=20, description="Mesh subdivisions per side, h = 1/n.")
    steps: Optional[int] = Field(default=None, description="Explicit number of time steps J; overrides k_rule.")
    k_rule: KRule = Field(default=KRule.H)
    T: float = Field(default=1.0)
    theta: float = Field(default=DEFAULT_THETA)
    lambda1: float = Field(default=1.0)
    lambda2: float = Field(default=1.0)
    paths: int = Field(default=20, description="Number of Brownian paths L.")
    seed: int = Field(default=DEFAULT_SEED)
    g: str = Field(default="1,0,0")
    workers: int = Field(default=1)
    out: str = Field(default="sllg-output")
    tolerance: float = Field(default=DEFAULT_SOLVER_TOLERANCE)
    snapshot_steps: Optional[List[int]] = Field(default=None)
    n_list: List[int] = Field(default=[5, 10, 20])
    k_rules: List[KRule] = Field(default=[KRule.H])
    lambda2_list: List[float] = Field(default=[1.0])
    full_scale: bool = Field(default=False)

    class Config:  # pylint: disable=too-few-public-methods
        extra = Extra.forbid
        validate_assignment = True

    @validator("n")
    def _n_positive(cls, value):  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("n must be at least 1")
        return value

    @validator("steps")
    def _steps_positive(cls, value):  # pylint: disable=no-self-argument
        if value is not None and value < 1:
            raise ValueError("steps must be at least 1")
        return value

    @validator("T")
    def _final_time_positive(cls, value):  # pylint: disable=no-self-argument
        if not value > 0:
            raise ValueError("T must be positive")
        return value

    @validator("theta")
    def _theta_in_unit_interval(cls, value):  # pylint: disable=no-self-argument
        if not 0.0 <= value <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        return value

    @validator("lambda1")
    def _lambda1_nonzero(cls, value):  # pylint: disable=no-self-argument
        if value == 0:
            raise ValueError("lambda1 must be nonzero")
        return value

    @validator("lambda2")
    def _lambda2_positive(cls, value):  # pylint: disable=no-self-argument
        if not value > 0:
            raise ValueError("lambda2 must be positive")
        return value

    @validator("paths")
    def _paths_positive(cls, value):  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("paths must be at least 1")
        return value

    @validator("seed")
    def _seed_in_range(cls, value):  # pylint: disable=no-self-argument
        if not 0 <= value < MAX_SEED:
            raise ValueError("seed must lie in [0, 2^64)")
        return value

    @validator("g")
    def _g_parses(cls, value):  # pylint: disable=no-self-argument
        parse_g(value)
        return value.strip()

    @validator("workers")
    def _workers_positive(cls, value):  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("workers must be at least 1")
        return value

    @validator("tolerance")
    def _tolerance_positive(cls, value):  # pylint: disable=no-self-argument
        if not value > 0:
            raise ValueError("tolerance must be positive")
        return value

    @validator("snapshot_steps")
    def _snapshot_steps_nonnegative(cls, value):  # pylint: disable=no-self-argument
        if value is not None and any(step < 0 for step in value):
            raise ValueError("snapshot steps must be nonnegative")
        return value

    @validator("n_list")
    def _n_list_valid(cls, value):  # pylint: disable=no-self-argument
        if not value:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in value):
            raise ValueError("every n in n_list must be at least 1")
        return value

    @validator("k_rules")
    def _k_rules_nonempty(cls, value):  # pylint: disable=no-self-argument
        if not value:
            raise ValueError("k_rules must not be empty")
        return value

    @validator("lambda2_list")
    def _lambda2_list_positive(cls, value):  # pylint: disable=no-self-argument
        if not value:
            raise ValueError("lambda2_list must not be empty")
        if any(not x > 0 for x in value):
            raise ValueError("every lambda2 in lambda2_list must be positive")
        return value

    @root_validator(skip_on_failure=True)
    def _snapshots_within_run(cls, values):  # pylint: disable=no-self-argument
        steps, snapshot_steps = values.get("steps"), values.get("snapshot_steps")
        if steps is not None and snapshot_steps and max(snapshot_steps) > steps:
            raise ValueError(f"snapshot steps must not exceed steps={steps}")
        return values

    def noise_choice(self) -> Union[Tuple[float, float, float], str]:
        """
        Parsed g: a constant unit vector or a catalog id.
        """
        return parse_g(self.g)

    def resolve_steps(self, n: Optional[int] = None, k_rule: Optional[KRule] = None) -> int:
        """
        Number of time steps J: steps if set, otherwise round(T n divisor) so that k = T/J follows the k rule with h = 1/n.
        """
        if self.steps is not None:
            return self.steps
        n = n if n is not None else self.n
        k_rule = KRule(k_rule) if k_rule is not None else self.k_rule
        return max(1, round(self.T * n * k_rule.divisor))

    def resolve_k(self, n: Optional[int] = None, k_rule: Optional[KRule] = None) -> float:
        """
        Time step k = T / J.
        """
        return self.T / self.resolve_steps(n, k_rule)

    def scheme_params(self, n: Optional[int] = None, k_rule: Optional[KRule] = None, lambda2: Optional[float] = None) -> SchemeParams:
        """
        Scheme parameters of one run.
        """
        return SchemeParams(lambda1=self.lambda1, lambda2=lambda2 if lambda2 is not None else self.lambda2, theta=self.theta, T=self.T, J=self.resolve_steps(n, k_rule))

    def snapshot_schedule(self, J: int) -> List[int]:  # pylint: disable=invalid-name
        """
        Snapshot steps: the configured ones, or every ceil(J/8) steps.
        """
        if self.snapshot_steps is not None:
            outside = [step for step in self.snapshot_steps if step > J]
            if outside:
                raise ConfigError(f"Snapshot steps {outside} exceed the number of steps J={J}.")
            return sorted(set(self.snapshot_steps))
        return list(range(0, J + 1, math.ceil(J / 8)))

    def save_to_file(self, file_path: str):
        """
        Writes the configuration to the file.
        """
        if os.path.dirname(file_path) and not os.path.exists(os.path.dirname(file_path)):
            os.makedirs(os.path.dirname(file_path))
        with click.open_file(file_path, mode="w", atomic=True) as file_obj:
            file_obj.write(self.json(indent=2, sort_keys=True))
            file_obj.write("\n")

    @staticmethod
    def load_values(file_path: str) -> Dict[str, Any]:
        """
        Reads the flat JSON object of a configuration file, without validating it.
        """
        if not os.path.exists(file_path):
            raise ConfigError(f"Configuration file {file_path} doesn't exist.")
        if not os.path.isfile(file_path):
            raise ConfigError(f"Configuration file {file_path} is not a file.")
        try:
            with click.open_file(file_path) as file_obj:
                json_object = json.load(file_obj)
        except (OSError, ValueError) as ex:
            LOG.error("Failed to load configuration file %s: %s.", file_path, str(ex))
            raise ConfigError(f"Configuration file {file_path} is not valid JSON: {ex}") from ex
        if json_object is None:
            return {}
        if not isinstance(json_object, dict):
            raise ConfigError(f"Configuration file {file_path} must contain a JSON object.")
        return json_object

    @staticmethod
    def load_from_file(file_path: str) -> "SimulationConfig":
        """
        Loads and validates the configuration from the file specified.
        """
        return SimulationConfig(**SimulationConfig.load_values(file_path))
