"""
sllg_fem.presets module.

The builtin initial magnetization on (-0.5, 0.5)^2, desk and full scale experiment presets, and the construction of a PathSimulator from a SimulationConfig.
"""
import logging
from typing import Any, Dict, Optional

import numpy as np

from sllg_fem.config import KRule, SimulationConfig
from sllg_fem.constants import INITIAL_DATUM_TOLERANCE
from sllg_fem.fem_core import interpolate
from sllg_fem.g_algebra import NoiseCoefficient
from sllg_fem.mesh import uniform_unit_square_mesh
from sllg_fem.scheme import PathSimulator

LOG = logging.getLogger(__name__)

DESK_PRESETS: Dict[str, Dict[str, Any]] = {
    "simulate": {},
    "convergence": {"n_list": [5, 10, 20], "k_rules": [KRule.H], "paths": 20},
    "energy": {"n": 20, "steps": 50, "paths": 20, "lambda2_list": [1.0]},
}

FULL_SCALE_PRESETS: Dict[str, Dict[str, Any]] = {
    "simulate": {"n": 50, "steps": 80, "snapshot_steps": [0, 5, 25, 35]},
    "convergence": {"n_list": [10, 20, 30, 40, 50], "k_rules": [KRule.H, KRule.H2, KRule.H4], "paths": 400},
    "energy": {"n": 60, "steps": 100, "paths": 400, "lambda2_list": [1.0]},
}


def preset_values(command: str, full_scale: bool = False) -> Dict[str, Any]:
    """
    Default configuration values of a command, before file values and flags are applied.
    """
    presets = FULL_SCALE_PRESETS if full_scale else DESK_PRESETS
    values = dict(presets.get(command, {}))
    if full_scale:
        values["full_scale"] = True
    return values


def builtin_M0(x: np.ndarray) -> np.ndarray:  # pylint: disable=invalid-name
    """
    Initial magnetization with a sharp out-of-plane core, for one point (2,) or many points (P, 2) of [-0.5, 0.5]^2.

    With x* = 2x and A = (1 - 2|x*|)^4:
      |x*| < 1/2:        (2 x* A, A^2 - |x*|^2) / (A^2 + |x*|^2)
      1/2 <= |x*| < 1:   (-2 x* A, A^2 - |x*|^2) / (A^2 + |x*|^2)
      |x*| >= 1:         (-x* / |x*|, 0)
    """
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] != 2:
        raise ValueError(f"Expected 2D points, got shape {np.shape(x)}.")
    outside = np.any(np.abs(points) > 0.5 + INITIAL_DATUM_TOLERANCE, axis=1)
    if np.any(outside):
        raise ValueError(f"Points outside [-0.5, 0.5]^2: {points[outside][:5].tolist()}.")

    scaled = 2.0 * points
    radius = np.linalg.norm(scaled, axis=1)
    core = (1.0 - 2.0 * radius) ** 4
    denominator = core**2 + radius**2
    # denominator vanishes nowhere: A = 0 only at |x*| = 1/2
    inner = radius < 0.5
    sign = np.where(inner, 1.0, -1.0)
    in_plane = (sign * 2.0 * core)[:, None] * scaled / denominator[:, None]
    out_of_plane = (core**2 - radius**2) / denominator
    values = np.concatenate([in_plane, out_of_plane[:, None]], axis=1)

    far = radius >= 1.0
    if np.any(far):
        values[far, :2] = -scaled[far] / radius[far, None]
        values[far, 2] = 0.0
    return values[0] if single else values


def build_noise(config: SimulationConfig, mesh) -> NoiseCoefficient:
    """
    Noise coefficient of the configuration on the mesh.
    """
    noise = config.noise_choice()
    if isinstance(noise, str):
        return NoiseCoefficient.from_catalog(mesh, noise)
    return NoiseCoefficient.constant(mesh, noise)


def build_simulator(config: SimulationConfig, n: Optional[int] = None, lambda2: Optional[float] = None, k_rule: Optional[KRule] = None) -> PathSimulator:
    """
    Uniform mesh, builtin initial datum, noise coefficient and scheme parameters described by the configuration.
    """
    n = n if n is not None else config.n
    mesh = uniform_unit_square_mesh(n)
    params = config.scheme_params(n=n, k_rule=k_rule, lambda2=lambda2)
    nc = build_noise(config, mesh)
    initial = interpolate(mesh, builtin_M0, vectorized=True)
    LOG.info("Built simulator: %s, J=%s, k=%.6g, theta=%s, lambda1=%s, lambda2=%s, g=%s.", mesh, params.J, params.k, params.theta, params.lambda1, params.lambda2, nc.label)
    return PathSimulator(mesh, params, nc, initial, tolerance=config.tolerance)
