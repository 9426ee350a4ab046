"""
sllg_fem.stochastic module.

Brownian paths on the time grid, per-path simulation, Monte Carlo orchestration and the ensemble estimators (modulus error E_{h,k}, mean exchange energy, mean magnetization snapshots).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from sllg_fem.fem_core import NodalField, edge_midpoint_values, gradient_energy
from sllg_fem.mesh import Mesh
from sllg_fem.scheme import PathSimulator, PathState, time_level, transform_to_M

LOG = logging.getLogger(__name__)

MAX_SEED = 2**64


class EstimatorError(ValueError):
    """
    Raised when an estimator receives empty or inconsistent samples.
    """


class PathFailedError(Exception):
    """
    Raised when one Monte Carlo path fails; carries what is needed to replay it.
    """

    def __init__(self, path_index: int, seed: int, cause: BaseException):
        super().__init__(f"Path {path_index} (seed {seed}) failed: {cause}")
        self.path_index = path_index
        self.seed = seed
        self.cause = cause


class BrownianPath:
    """
    Discrete Wiener path W(t_j) on the grid t_j = j k, j = 0, ..., J.
    """

    def __init__(self, cumulative: np.ndarray, k: float, seed: int, path_index: int):
        self.cumulative = cumulative
        # Derived from the cumulative sums so that cumulative[j + 1] - cumulative[j] == increments[j] holds exactly
        self.increments = np.diff(cumulative)
        self.k = k
        self.seed = seed
        self.path_index = path_index
        self.cumulative.setflags(write=False)
        self.increments.setflags(write=False)

    @property
    def J(self) -> int:  # pylint: disable=invalid-name
        """
        Number of steps.
        """
        return len(self.increments)

    def wk_at_step(self, j: int) -> float:
        """
        W_k(t_j) = W(t_j).
        """
        return float(self.cumulative[min(max(j, 0), self.J)])

    def wk(self, t: float) -> float:
        """
        Piecewise constant W_k(t) = W(t_j) for t in [t_j, t_{j+1}), clamped to the grid.
        """
        return self.wk_at_step(time_level(t, self.k))


def sample_path(seed: int, path_index: int, J: int, k: float) -> BrownianPath:  # pylint: disable=invalid-name
    """
    Generates the path with increments ~ N(0, k) from a Philox counter-based generator keyed by (seed, path_index).

    Increment j is the j-th draw of that stream, so any path regenerates bit for bit without shared generator state.
    """
    if J < 1:
        raise EstimatorError(f"A Brownian path needs at least one step, got J={J}.")
    if not k > 0:
        raise EstimatorError(f"Time step must be positive, got k={k}.")
    if not (0 <= seed < MAX_SEED and 0 <= path_index < MAX_SEED):
        raise EstimatorError(f"Seed and path index must lie in [0, 2^64), got {seed} and {path_index}.")
    generator = np.random.Generator(np.random.Philox(key=np.array([seed, path_index], dtype=np.uint64)))
    normals = generator.standard_normal(J)
    cumulative = np.concatenate([[0.0], np.cumsum(math.sqrt(k) * normals)])
    return BrownianPath(cumulative, k, seed, path_index)


class CompensatedSum:
    """
    Neumaier-compensated running sum of scalars or equally shaped arrays.
    """

    def __init__(self, shape=()):
        self.total = np.zeros(shape)
        self.compensation = np.zeros(shape)
        self.count = 0

    def add(self, value) -> None:
        """
        Adds one sample.
        """
        value = np.asarray(value, dtype=float)
        updated = self.total + value
        bigger = np.abs(self.total) >= np.abs(value)
        self.compensation = self.compensation + np.where(bigger, (self.total - updated) + value, (value - updated) + self.total)
        self.total = updated
        self.count += 1

    @property
    def value(self) -> np.ndarray:
        """
        Compensated sum.
        """
        return self.total + self.compensation


class StepRecord(NamedTuple):
    """
    One row of a path trace.
    """

    j: int
    t: float
    energy: float
    v_norm_sq: float
    iterations: int
    residual: float


class PathResult(BaseModel):
    """
    Everything one path contributes to the ensemble, plus its own diagnostics.
    """

    path_index: int
    seed: int
    records: List[StepRecord]
    state: PathState
    M_energy: np.ndarray  # pylint: disable=invalid-name
    deficits: np.ndarray
    error_squared: float
    final_M: NodalField  # pylint: disable=invalid-name
    snapshots: Dict[int, NodalField] = Field(default_factory=dict)
    history: List[NodalField] = Field(default_factory=list)
    max_sphere_drift: float = 0.0
    max_tangency: float = 0.0

    class Config:  # pylint: disable=too-few-public-methods
        arbitrary_types_allowed = True


def modulus_deficit_integral(M: NodalField) -> float:  # pylint: disable=invalid-name
    """
    Integral over the domain of (1 - |M|)^2, with the three edge-midpoint rule per element.
    """
    moduli = np.linalg.norm(edge_midpoint_values(M), axis=2)  # (E, 3)
    return float(np.sum(M.mesh.areas / 3.0 * np.sum((1.0 - moduli) ** 2, axis=1)))


def path_error_squared(history: Sequence[NodalField], k: float) -> float:
    """
    k sum_j int (1 - |M^(j)|)^2 over the levels of the left-endpoint interpolant M^-.
    """
    if not history:
        raise EstimatorError("Empty field history.")
    return k * math.fsum(modulus_deficit_integral(M) for M in history)


def error_Ehk(histories: Sequence[Sequence[NodalField]], k: float) -> float:  # pylint: disable=invalid-name
    """
    E_{h,k} = sqrt(E[int_0^T int_D (1 - |M^-_{h,k}|)^2]), the expectation taken as the mean over paths.

    Every history holds the levels M^(0), ..., M^(J-1) of one path.
    """
    if not histories:
        raise EstimatorError("No paths to average.")
    return math.sqrt(math.fsum(path_error_squared(history, k) for history in histories) / len(histories))


def simulate_path(simulator: PathSimulator, path: BrownianPath, snapshot_steps: Iterable[int] = (), keep_history: bool = False) -> PathResult:
    """
    Runs the scheme along one Brownian path and evaluates M^(j) = exp(W_k(t_j) G_h) m^(j) at every level.
    """
    params = simulator.params
    if path.J != params.J:
        raise EstimatorError(f"Brownian path has {path.J} steps, scheme expects {params.J}.")
    wanted = set(snapshot_steps)
    state = simulator.initial_state()
    records: List[StepRecord] = []
    M_energy: List[float] = []  # pylint: disable=invalid-name
    deficits: List[float] = []
    snapshots: Dict[int, NodalField] = {}
    history: List[NodalField] = []
    max_drift = float(np.abs(state.m.moduli() - 1.0).max())
    max_tangency = 0.0

    for j in range(params.J + 1):
        wk_value = path.wk_at_step(j)
        M = transform_to_M(state.m, wk_value, simulator.nc)  # pylint: disable=invalid-name
        M_energy.append(gradient_energy(M, simulator.stiffness))
        if j in wanted:
            snapshots[j] = M
        if j == params.J:
            break
        if keep_history:
            history.append(M)
        deficits.append(modulus_deficit_integral(M))

        next_state, solution = simulator.step(state, wk_value)
        max_tangency = max(max_tangency, float(np.abs(np.sum(solution.v.values * state.m.values, axis=1)).max()))
        max_drift = max(max_drift, float(np.abs(next_state.m.moduli() - 1.0).max()))
        records.append(StepRecord(j=j, t=params.time(j), energy=state.energy_trace[-1], v_norm_sq=next_state.v_norm_trace[-1], iterations=solution.iterations, residual=solution.residual))
        state = next_state

    LOG.debug("Path %s: final energy %.6g, max sphere drift %.3e, max tangency %.3e.", path.path_index, M_energy[-1], max_drift, max_tangency)
    return PathResult(
        path_index=path.path_index,
        seed=path.seed,
        records=records,
        state=state,
        M_energy=np.array(M_energy),
        deficits=np.array(deficits),
        error_squared=params.k * math.fsum(deficits),
        final_M=M,
        snapshots=snapshots,
        history=history,
        max_sphere_drift=max_drift,
        max_tangency=max_tangency,
    )


class EnsembleStats:
    """
    Running ensemble accumulators; paths must be added in path_index order for bitwise reproducibility.
    """

    def __init__(self, mesh: Mesh, J: int, k: float, snapshot_steps: Iterable[int] = ()):  # pylint: disable=invalid-name
        self.mesh = mesh
        self.J = J  # pylint: disable=invalid-name
        self.k = k
        self.path_count = 0
        self.error_squared = CompensatedSum()
        self.energy = CompensatedSum((J + 1,))
        self.energy_squares = CompensatedSum((J + 1,))
        self.snapshots: Dict[int, CompensatedSum] = {step: CompensatedSum((mesh.node_count, 3)) for step in sorted(set(snapshot_steps))}
        self.max_sphere_drift = 0.0
        self.max_tangency = 0.0

    def add(self, result: PathResult) -> None:
        """
        Accumulates one path.
        """
        if len(result.M_energy) != self.J + 1:
            raise EstimatorError(f"Path {result.path_index} has an energy trace of length {len(result.M_energy)}, expected {self.J + 1}.")
        self.path_count += 1
        self.error_squared.add(result.error_squared)
        self.energy.add(result.M_energy)
        self.energy_squares.add(result.M_energy**2)
        for step, accumulator in self.snapshots.items():
            accumulator.add(result.snapshots[step].values)
        self.max_sphere_drift = max(self.max_sphere_drift, result.max_sphere_drift)
        self.max_tangency = max(self.max_tangency, result.max_tangency)

    def _require_paths(self) -> None:
        if self.path_count == 0:
            raise EstimatorError("No paths accumulated yet.")

    def error_Ehk(self) -> float:  # pylint: disable=invalid-name
        """
        E_{h,k} over the accumulated paths.
        """
        self._require_paths()
        return math.sqrt(float(self.error_squared.value) / self.path_count)

    def mean_energy(self) -> np.ndarray:
        """
        Ensemble mean of ||grad M(t_j)||^2 for every j.
        """
        self._require_paths()
        return self.energy.value / self.path_count

    def std_energy(self) -> np.ndarray:
        """
        Sample standard deviation of ||grad M(t_j)||^2; zero for a single path.
        """
        self._require_paths()
        if self.path_count < 2:
            return np.zeros(self.J + 1)
        mean = self.mean_energy()
        variance = (self.energy_squares.value - self.path_count * mean**2) / (self.path_count - 1)
        return np.sqrt(np.maximum(variance, 0.0))

    def times(self) -> np.ndarray:
        """
        Time levels t_j.
        """
        return np.arange(self.J + 1) * self.k

    def mean_field(self, step: int) -> NodalField:
        """
        Ensemble mean of M at a snapshot step.
        """
        self._require_paths()
        if step not in self.snapshots:
            raise EstimatorError(f"Step {step} isn't a snapshot step; available: {sorted(self.snapshots)}.")
        return NodalField(self.mesh, self.snapshots[step].value / self.path_count)


def energy_trace(ensemble: Union[EnsembleStats, Sequence[Sequence[float]]]) -> np.ndarray:
    """
    Pointwise ensemble mean of per-path energy traces.
    """
    if isinstance(ensemble, EnsembleStats):
        return ensemble.mean_energy()
    if not ensemble:
        raise EstimatorError("No energy traces to average.")
    lengths = {len(trace) for trace in ensemble}
    if len(lengths) != 1:
        raise EstimatorError(f"Energy traces have different lengths: {sorted(lengths)}.")
    accumulator = CompensatedSum((lengths.pop(),))
    for trace in ensemble:
        accumulator.add(trace)
    return accumulator.value / len(ensemble)


def run_paths(simulator: PathSimulator, paths: int, seed: int, workers: int = 1, snapshot_steps: Iterable[int] = ()) -> EnsembleStats:
    """
    Simulates paths 0, ..., paths - 1 and accumulates them in index order, with up to workers paths in flight.
    """
    if paths < 1:
        raise EstimatorError(f"At least one path is required, got {paths}.")
    params = simulator.params
    snapshot_steps = sorted(set(snapshot_steps))
    stats = EnsembleStats(simulator.mesh, params.J, params.k, snapshot_steps)

    def run_one(path_index: int) -> PathResult:
        try:
            path = sample_path(seed, path_index, params.J, params.k)
            return simulate_path(simulator, path, snapshot_steps)
        except Exception as ex:  # pylint: disable=broad-except
            LOG.error("Path %s (seed %s) failed: %s.", path_index, seed, str(ex), exc_info=True)
            raise PathFailedError(path_index, seed, ex) from ex

    LOG.info("Running %s paths with %s workers (J=%s, k=%.6g, %s nodes).", paths, workers, params.J, params.k, simulator.mesh.node_count)
    if workers <= 1:
        for path_index in range(paths):
            stats.add(run_one(path_index))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            # map yields in submission order, which fixes the merge order
            for result in executor.map(run_one, range(paths)):
                stats.add(result)
    LOG.info("Finished %s paths: E_hk=%.6g.", stats.path_count, stats.error_Ehk())
    return stats


def run_monte_carlo(config, n: Optional[int] = None, lambda2: Optional[float] = None, k_rule=None, snapshot_steps: Optional[Iterable[int]] = None) -> EnsembleStats:
    """
    Builds the simulator described by a SimulationConfig (optionally overriding n, lambda2 and the k rule) and runs its paths.
    """
    # Imported here: presets depends on the config layer, which is only needed by this entry point
    from sllg_fem.presets import build_simulator  # pylint: disable=import-outside-toplevel

    simulator = build_simulator(config, n=n, lambda2=lambda2, k_rule=k_rule)
    if snapshot_steps is None:
        snapshot_steps = config.snapshot_schedule(simulator.params.J)
    return run_paths(simulator, config.paths, config.seed, config.workers, snapshot_steps)
