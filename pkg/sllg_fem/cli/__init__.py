"""
Module sllg_fem.cli
"""
import functools
import logging
import os
import sys
from gettext import gettext
from typing import Any, Callable, Dict, List, Optional

import click
from pydantic import ValidationError

import sllg_fem
from sllg_fem.common_utils.common import coalesce, ensure_dir, format_number
from sllg_fem.config import ConfigError, KRule, LogLevelEnum, SimulationConfig
from sllg_fem.output import energy_file_name, snapshot_file_name, write_csv, write_manifest, write_vtk
from sllg_fem.presets import build_simulator, preset_values
from sllg_fem.scheme import SolverError
from sllg_fem.stochastic import PathFailedError, run_monte_carlo, sample_path, simulate_path
from sllg_fem.utils import configure_logging

LOG = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_ERROR = 3

CONFIG_FILE = "config.json"
TRACE_FILE = "trace.csv"
ERRORS_FILE = "errors.csv"


def _split(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise click.BadParameter("expected a comma separated list")
    return items


def _int_list(_ctx, _param, value: Optional[str]) -> Optional[List[int]]:
    try:
        items = _split(value)
        return None if items is None else [int(item) for item in items]
    except ValueError as ex:
        raise click.BadParameter(f"expected comma separated integers, got '{value}'") from ex


def _float_list(_ctx, _param, value: Optional[str]) -> Optional[List[float]]:
    try:
        items = _split(value)
        return None if items is None else [float(item) for item in items]
    except ValueError as ex:
        raise click.BadParameter(f"expected comma separated numbers, got '{value}'") from ex


def _k_rule_list(_ctx, _param, value: Optional[str]) -> Optional[List[KRule]]:
    try:
        items = _split(value)
        return None if items is None else [KRule(item) for item in items]
    except ValueError as ex:
        raise click.BadParameter(f"expected comma separated k rules among {', '.join(rule.value for rule in KRule)}, got '{value}'") from ex


COMMON_OPTIONS = [
    click.option("--config", "config_file", type=click.Path(dir_okay=False), help="JSON file with SimulationConfig keys; flags override its values."),
    click.option("--n", type=int, help="Mesh subdivisions per side (h = 1/n)."),
    click.option("--steps", type=int, help="Number of time steps J; overrides the k rule."),
    click.option("--k-rule", type=click.Choice([rule.value for rule in KRule]), help="Time step relative to h."),
    click.option("--T", "T", type=float, help="Final time."),
    click.option("--theta", type=float, help="Implicitness parameter in [0, 1]."),
    click.option("--lambda1", type=float, help="Precession coefficient."),
    click.option("--lambda2", type=float, help="Damping coefficient."),
    click.option("--paths", type=int, help="Number of Brownian paths L."),
    click.option("--seed", type=int, help="Master seed."),
    click.option("--g", "g", help='Noise coefficient: constant unit vector "gx,gy,gz" or an analytic id (twist-x, twist-xy).'),
    click.option("--workers", type=int, help="Paths simulated concurrently."),
    click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
    click.option("--tolerance", type=float, help="Relative residual of the per-step linear solves."),
    click.option("--snapshot-steps", callback=_int_list, help="Comma separated steps at which fields are written."),
    click.option("--full-scale", is_flag=True, default=False, help="Use the full scale experiment presets instead of the desk scale ones."),
    click.option("--log-level", type=click.Choice([level.value for level in LogLevelEnum], case_sensitive=False), default=LogLevelEnum.WARNING.value, show_default=True),
]


def common_options(func: Callable) -> Callable:
    """
    Adds the options shared by every subcommand.
    """
    for option in reversed(COMMON_OPTIONS):
        func = option(func)
    return func


def exit_codes(func: Callable) -> Callable:
    """
    Maps configuration errors to exit code 2 and solver failures to exit code 3.
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, ValidationError) as ex:
            LOG.debug("Configuration error: %s.", str(ex), exc_info=True)
            click.echo(gettext("Configuration error: ") + str(ex), err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except (SolverError, PathFailedError) as ex:
            click.echo(gettext("Solver failure: ") + str(ex), err=True)
            sys.exit(EXIT_SOLVER_ERROR)

    return wrapper


def load_config(command: str, config_file: Optional[str], full_scale: bool, log_level: str, flags: Dict[str, Any]) -> SimulationConfig:
    """
    Merges presets, file values and flags (in increasing priority), validates them and sets up logging in the output directory.
    """
    configure_logging(log_level)
    file_values = SimulationConfig.load_values(config_file) if config_file else {}
    full_scale = full_scale or bool(file_values.get("full_scale", False))
    values = preset_values(command, full_scale)
    # An explicit k rule replaces the step count of the preset
    if flags.get("k_rule") is not None and coalesce(flags.get("steps"), file_values.get("steps")) is None:
        values.pop("steps", None)
    values.update(file_values)
    values.update({key: value for key, value in flags.items() if value is not None})
    config = SimulationConfig(**values)
    configure_logging(log_level, ensure_dir(config.out))
    LOG.info("Effective configuration for %s: %s.", command, config.json())
    return config


def _echo_warning(message: Optional[str]) -> None:
    if message:
        click.echo(gettext("Warning: ") + message, err=True)


@click.group()
@click.version_option(sllg_fem.__version__)
def run() -> None:
    """
    Finite element simulator for the stochastic Landau-Lifshitz-Gilbert equation.
    """


@run.command()
@common_options
@exit_codes
def simulate(config_file: Optional[str], full_scale: bool, log_level: str, **flags) -> None:
    """
    Runs a single path and writes its per-step trace and final fields.
    """
    config = load_config("simulate", config_file, full_scale, log_level, flags)
    simulator = build_simulator(config)
    _echo_warning(simulator.warning)
    params = simulator.params
    snapshot_steps = config.snapshot_schedule(params.J)

    path = sample_path(config.seed, 0, params.J, params.k)
    try:
        result = simulate_path(simulator, path, snapshot_steps)
    except SolverError as ex:
        LOG.error("Path 0 (seed %s) failed at step %s with residual %s.", config.seed, ex.step_index, ex.residual)
        raise PathFailedError(0, config.seed, ex) from ex

    out = config.out
    files = [os.path.join(out, CONFIG_FILE)]
    config.save_to_file(files[0])
    files.append(write_csv(os.path.join(out, TRACE_FILE), ["j", "t", "energy", "v_norm_sq", "iterations", "residual"], result.records))
    files.append(write_vtk(os.path.join(out, "final-transformed.vtk"), simulator.mesh, {"m": result.state.m}, title=f"m at t={params.T:g}"))
    files.append(write_vtk(os.path.join(out, "final-magnetization.vtk"), simulator.mesh, {"M": result.final_M}, title=f"M at t={params.T:g}"))
    for step, field in result.snapshots.items():
        files.append(write_vtk(os.path.join(out, snapshot_file_name("magnetization", step)), simulator.mesh, {"M": field}, title=f"M at t={params.time(step):g}"))
    write_manifest(out, "simulate", config, files, {"stability_warning": simulator.warning, "max_sphere_drift": result.max_sphere_drift, "max_tangency": result.max_tangency})

    click.echo(f"{gettext('Steps')}: {params.J}, k = {format_number(params.k)}")
    click.echo(f"{gettext('Initial energy')}: {format_number(result.M_energy[0])}")
    click.echo(f"{gettext('Final energy')}: {format_number(result.M_energy[-1])}")
    click.echo(f"{gettext('Output directory')}: {out}")


@run.command()
@common_options
@click.option("--n-list", callback=_int_list, help="Comma separated mesh subdivisions.")
@click.option("--k-rules", callback=_k_rule_list, help="Comma separated k rules (h, h/2, h/4).")
@exit_codes
def convergence(config_file: Optional[str], full_scale: bool, log_level: str, **flags) -> None:
    """
    Estimates E_hk for every mesh of the n list and every k rule.
    """
    config = load_config("convergence", config_file, full_scale, log_level, flags)
    if config.steps is not None:
        LOG.warning("steps=%s overrides the k rules; every mesh uses the same time step.", config.steps)

    rows = []
    for k_rule in config.k_rules:
        for n in config.n_list:
            stats = run_monte_carlo(config, n=n, k_rule=k_rule, snapshot_steps=[])
            value = stats.error_Ehk()
            rows.append([n, stats.k, stats.path_count, config.seed, value])
            click.echo(f"n = {n}, {k_rule.display_name()}: E_hk = {format_number(value)}")

    out = config.out
    files = [os.path.join(out, CONFIG_FILE)]
    config.save_to_file(files[0])
    files.append(write_csv(os.path.join(out, ERRORS_FILE), ["n", "k", "L", "seed", "E_hk"], rows))
    write_manifest(out, "convergence", config, files)
    click.echo(f"{gettext('Output directory')}: {out}")


@run.command()
@common_options
@click.option("--lambda2-list", callback=_float_list, help="Comma separated damping coefficients.")
@exit_codes
def energy(config_file: Optional[str], full_scale: bool, log_level: str, **flags) -> None:
    """
    Writes the ensemble mean exchange energy of M over time, one table per lambda2, and mean field snapshots.
    """
    config = load_config("energy", config_file, full_scale, log_level, flags)
    out = config.out
    files = [os.path.join(out, CONFIG_FILE)]
    config.save_to_file(files[0])

    ratios: Dict[str, float] = {}
    for lambda2 in config.lambda2_list:
        stats = run_monte_carlo(config, lambda2=lambda2)
        mean, std = stats.mean_energy(), stats.std_energy()
        files.append(write_csv(os.path.join(out, energy_file_name(lambda2)), ["t", "mean_energy", "std_energy"], zip(stats.times(), mean, std)))
        for step in stats.snapshots:
            file_name = snapshot_file_name(f"mean-magnetization-lambda2-{lambda2:g}", step)
            files.append(write_vtk(os.path.join(out, file_name), stats.mesh, {"M": stats.mean_field(step)}, title=f"mean M at t={step * stats.k:g}, lambda2={lambda2:g}"))
        ratios[format(lambda2, "g")] = float(mean[-1] / mean[0]) if mean[0] else float("nan")
        click.echo(f"lambda2 = {format_number(lambda2)}: {gettext('final/initial mean energy')} = {format_number(ratios[format(lambda2, 'g')])}")

    write_manifest(out, "energy", config, files, {"energy_ratio": ratios})
    click.echo(f"{gettext('Output directory')}: {out}")
