"""
sllg_fem.scheme module.

One realization of the theta-linear tangent plane scheme: tangent frames, the per-step 2N x 2N linear system, its Krylov solve, the nodal projection update and the transform back to the stochastic magnetization.
"""
import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from sllg_fem.constants import DEFAULT_SOLVER_TOLERANCE, DEFAULT_THETA, DENSE_FALLBACK_MAX_NODES, GMRES_RESTART, GRID_SNAP_TOLERANCE, INITIAL_DATUM_TOLERANCE, UNIT_MODULUS_TOLERANCE
from sllg_fem.fem_core import FieldError, NodalField, SparseMatrix, assemble_stiffness, gradient_energy, lumped_mass_weights, project_to_sphere
from sllg_fem.g_algebra import NoiseCoefficient, exp_sg_apply, r_hk_apply
from sllg_fem.mesh import Mesh

LOG = logging.getLogger(__name__)


class FrameError(ValueError):
    """
    Raised when a tangent frame is requested for a field that isn't nodewise unit.
    """


class SolverError(Exception):
    """
    Raised when the per-step linear system can't be solved to tolerance.
    """

    def __init__(self, message: str, step_index: Optional[int] = None, residual: Optional[float] = None, iterations: Optional[int] = None):
        super().__init__(message)
        self.step_index = step_index
        self.residual = residual
        self.iterations = iterations


class SchemeParams(BaseModel):
    """
    Physical and discretization parameters of one run.
    """

    lambda1: float = Field(default=1.0)
    lambda2: float = Field(default=1.0)
    theta: float = Field(default=DEFAULT_THETA)
    T: float = Field(default=1.0)
    J: int = Field(default=1)

    class Config:  # pylint: disable=too-few-public-methods
        allow_mutation = False

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

    @validator("theta")
    def _theta_in_unit_interval(cls, value):  # pylint: disable=no-self-argument
        if not 0.0 <= value <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        return value

    @validator("T")
    def _final_time_positive(cls, value):  # pylint: disable=no-self-argument
        if not value > 0:
            raise ValueError("final time T must be positive")
        return value

    @validator("J")
    def _steps_positive(cls, value):  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("number of steps J must be at least 1")
        return value

    @property
    def mu(self) -> float:
        """
        lambda1^2 + lambda2^2.
        """
        return self.lambda1**2 + self.lambda2**2

    @property
    def k(self) -> float:
        """
        Time step T / J.
        """
        return self.T / self.J

    def time(self, j: int) -> float:
        """
        Time level t_j = j k.
        """
        return j * self.k


class TangentFrame:
    """
    Per-node orthonormal pair (e1, e2) spanning the plane orthogonal to m.
    """

    def __init__(self, m: NodalField, e1: np.ndarray, e2: np.ndarray):
        self.m = m
        self.e1 = e1
        self.e2 = e2

    @property
    def vectors(self):
        """
        (e1, e2) tuple.
        """
        return self.e1, self.e2

    def reconstruct(self, coordinates: np.ndarray) -> NodalField:
        """
        Tangential field sum_p a_p e_p from coordinates ordered [a_1 of every node, a_2 of every node].
        """
        count = self.m.mesh.node_count
        if coordinates.shape != (2 * count,):
            raise FieldError(f"Expected {2 * count} frame coordinates, got shape {coordinates.shape}.")
        return NodalField(self.m.mesh, coordinates[:count, None] * self.e1 + coordinates[count:, None] * self.e2)

    def coordinates(self, v: NodalField) -> np.ndarray:
        """
        Frame coordinates of the tangential part of v.
        """
        return np.concatenate([np.sum(v.values * self.e1, axis=1), np.sum(v.values * self.e2, axis=1)])


class StepSystem(NamedTuple):
    """
    Assembled linear system of one step, in frame coordinates.
    """

    matrix: SparseMatrix
    rhs: np.ndarray
    frame: TangentFrame


class StepSolution(NamedTuple):
    """
    Tangential update v of one step and solver diagnostics.
    """

    v: NodalField
    iterations: int
    residual: float
    method: str


class PathState(BaseModel):
    """
    State of the scheme after j steps, with the traces needed by the energy estimate.
    """

    j: int
    m: NodalField
    energy_trace: List[float] = Field(default_factory=list)
    v_norm_trace: List[float] = Field(default_factory=list)
    grad_v_trace: List[float] = Field(default_factory=list)

    class Config:  # pylint: disable=too-few-public-methods
        arbitrary_types_allowed = True
        allow_mutation = False


def stability_warning(params: SchemeParams, h: float) -> Optional[str]:
    """
    Returns a warning when theta is in the conditionally stable range and the step looks too large for the mesh.
    """
    k = params.k
    if params.theta < 0.5 and k > h**2:
        return f"theta={params.theta:g} < 1/2 is only stable when k = o(h^2), but k={k:.6g} > h^2={h**2:.6g}."
    if params.theta == 0.5 and k > h:
        return f"theta=1/2 is only stable when k = o(h), but k={k:.6g} > h={h:.6g}."
    return None


def build_tangent_frame(m: NodalField) -> TangentFrame:
    """
    Orthonormal frame of the plane orthogonal to m at every node.

    e1 is the coordinate axis least aligned with m, orthogonalized against m; e2 = m x e1.
    """
    moduli = m.moduli()
    drift = np.abs(moduli - 1.0)
    if drift.size and drift.max() > UNIT_MODULUS_TOLERANCE:
        worst = int(np.argmax(drift))
        raise FrameError(f"Tangent frame requires unit nodal vectors; node {worst} has modulus {moduli[worst]:.12g}.")
    values = m.values
    axes = np.eye(3)[np.argmin(np.abs(values), axis=1)]
    e1 = axes - np.sum(axes * values, axis=1)[:, None] * values
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(values, e1)
    e2 /= np.linalg.norm(e2, axis=1)[:, None]
    return TangentFrame(m, e1, e2)


def assemble_step_system(m: NodalField, frame: TangentFrame, params: SchemeParams, r_field: NodalField, stiffness: Optional[SparseMatrix] = None, weights: Optional[np.ndarray] = None) -> StepSystem:
    """
    Frame-coordinate form of

    lambda2 <v, w>_h - lambda1 <m x v, w>_h + mu theta k <grad v, grad w> = -mu <grad m, grad w> - <R, w>_h

    for all tangential w, with <., .>_h the lumped inner product.
    """
    mesh = m.mesh
    if not (frame.m.mesh.is_same(mesh) and r_field.mesh.is_same(mesh)):
        raise FieldError("Frame, magnetization and R field must live on the same mesh.")
    if stiffness is None:
        stiffness = assemble_stiffness(mesh)
    if weights is None:
        weights = lumped_mass_weights(mesh)
    if stiffness.shape != (mesh.node_count, mesh.node_count) or weights.shape != (mesh.node_count,):
        raise FieldError("Stiffness matrix and lumped weights don't match the mesh.")

    mu = params.mu
    basis = frame.vectors
    component_diags = [[sparse.diags(e[:, c]) for c in range(3)] for e in basis]
    blocks = []
    for p, e_test in enumerate(basis):
        row = []
        for q, e_trial in enumerate(basis):
            coupled = sum(component_diags[p][c] @ stiffness @ component_diags[q][c] for c in range(3))
            nodal = weights * (params.lambda2 * np.sum(e_test * e_trial, axis=1) - params.lambda1 * np.sum(e_test * np.cross(m.values, e_trial), axis=1))
            row.append(mu * params.theta * params.k * coupled + sparse.diags(nodal))
        blocks.append(row)
    matrix = sparse.bmat(blocks, format="csr")

    grad_m = stiffness @ m.values
    rhs = np.concatenate([-mu * np.sum(e * grad_m, axis=1) - weights * np.sum(e * r_field.values, axis=1) for e in basis])
    return StepSystem(matrix=matrix, rhs=rhs, frame=frame)


def solve_step(system: StepSystem, tolerance: float = DEFAULT_SOLVER_TOLERANCE, step_index: Optional[int] = None) -> StepSolution:
    """
    Solves the (non-symmetric, lambda2-coercive) step system with Jacobi-preconditioned GMRES.

    Falls back to a dense direct solve for small meshes when GMRES misses the tolerance within 10 * 2N iterations.
    """
    if not tolerance > 0:
        raise SolverError(f"Solver tolerance must be positive, got {tolerance}.", step_index=step_index)
    matrix, rhs, frame = system
    size = len(rhs)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return StepSolution(v=frame.reconstruct(np.zeros(size)), iterations=0, residual=0.0, method="trivial")

    diagonal = matrix.diagonal()
    preconditioner = sparse_linalg.LinearOperator(matrix.shape, matvec=lambda x: x / diagonal)
    iteration_cap = 10 * size
    restart = min(GMRES_RESTART, size)
    iterations = 0

    def count(_residual_norm):
        nonlocal iterations
        iterations += 1

    coordinates, info = sparse_linalg.gmres(matrix, rhs, rtol=tolerance, atol=0.0, restart=restart, maxiter=math.ceil(iteration_cap / restart), M=preconditioner, callback=count, callback_type="pr_norm")
    residual = float(np.linalg.norm(rhs - matrix @ coordinates)) / rhs_norm
    method = "gmres"
    LOG.debug("Step %s: GMRES finished with info=%s after %s iterations, relative residual %.3e.", step_index, info, iterations, residual)

    if info != 0 or residual > tolerance:
        node_count = size // 2
        if node_count > DENSE_FALLBACK_MAX_NODES:
            LOG.error("Step %s: GMRES failed (info=%s, %s iterations, residual %.3e).", step_index, info, iterations, residual)
            raise SolverError(f"Step {step_index}: GMRES did not reach relative residual {tolerance:.1e} within {iteration_cap} iterations (residual {residual:.3e}).", step_index=step_index, residual=residual, iterations=iterations)
        LOG.warning("Step %s: GMRES residual %.3e above %.1e after %s iterations; falling back to a dense solve.", step_index, residual, tolerance, iterations)
        coordinates = np.linalg.solve(matrix.toarray(), rhs)
        residual = float(np.linalg.norm(rhs - matrix @ coordinates)) / rhs_norm
        method = "dense"
        if not np.isfinite(residual) or residual > tolerance:
            raise SolverError(f"Step {step_index}: dense solve left relative residual {residual:.3e} above {tolerance:.1e}.", step_index=step_index, residual=residual, iterations=iterations)

    return StepSolution(v=frame.reconstruct(coordinates), iterations=iterations, residual=residual, method=method)


def advance(state: PathState, params: SchemeParams, solution: StepSolution, stiffness: SparseMatrix, weights: np.ndarray) -> PathState:
    """
    m^(j+1) = projection of m^(j) + k v^(j) onto the sphere, nodewise; traces are extended.
    """
    v = solution.v
    state.m.check_same_mesh(v)
    m_next = project_to_sphere(state.m + params.k * v)
    energy_trace = list(state.energy_trace)
    if not energy_trace:
        energy_trace.append(gradient_energy(state.m, stiffness))
    energy_trace.append(gradient_energy(m_next, stiffness))
    v_norm_sq = float(np.sum(weights * np.sum(v.values**2, axis=1)))
    return PathState(
        j=state.j + 1,
        m=m_next,
        energy_trace=energy_trace,
        v_norm_trace=state.v_norm_trace + [v_norm_sq],
        grad_v_trace=state.grad_v_trace + [gradient_energy(v, stiffness)],
    )


def transform_to_M(m: NodalField, wk_value: float, nc: NoiseCoefficient) -> NodalField:  # pylint: disable=invalid-name
    """
    M = exp(W_k(t) G_h) m.
    """
    return exp_sg_apply(wk_value, m, nc)


def inverse_transform(M: NodalField, wk_value: float, nc: NoiseCoefficient) -> NodalField:  # pylint: disable=invalid-name
    """
    m = exp(-W_k(t) G_h) M.
    """
    return exp_sg_apply(-wk_value, M, nc)


def energy_monitor(state: PathState, params: SchemeParams) -> np.ndarray:
    """
    ||grad m^(j)||^2 + lambda2/mu sum_{i<j} k ||v^(i)||^2 + (2 theta - 1) k^2 sum_{i<j} ||grad v^(i)||^2 for every j.

    Nonincreasing in j for theta in (1/2, 1] when R vanishes.
    """
    k = params.k
    dissipated = np.concatenate([[0.0], np.cumsum(state.v_norm_trace)]) * (params.lambda2 / params.mu) * k
    numerical = np.concatenate([[0.0], np.cumsum(state.grad_v_trace)]) * (2.0 * params.theta - 1.0) * k**2
    return np.asarray(state.energy_trace) + dissipated + numerical


def time_level(t: float, k: float) -> int:
    """
    Index j with t in [t_j, t_{j+1}), unclamped.

    t / k is snapped to an integer only when it is within rounding of it, so times just below a grid point keep the previous level.
    """
    if not k > 0:
        raise FieldError(f"Time step must be positive, got k={k}.")
    ratio = t / k
    nearest = round(ratio)
    if abs(ratio - nearest) <= GRID_SNAP_TOLERANCE * max(1.0, abs(ratio)):
        return int(nearest)
    return int(math.floor(ratio))


def _check_history(history: Sequence[NodalField]) -> None:
    if not history:
        raise FieldError("Time interpolants need at least one level.")


def linear_interpolant(history: Sequence[NodalField], k: float, t: float) -> NodalField:
    """
    Piecewise linear in time interpolant m_{h,k}(t) of the levels m^(0), ..., m^(J), constant outside [0, J k].
    """
    _check_history(history)
    if len(history) < 2:
        return history[0]
    j = min(max(time_level(t, k), 0), len(history) - 2)
    weight = min(max((t - j * k) / k, 0.0), 1.0)
    return history[j] * (1.0 - weight) + history[j + 1] * weight


def left_interpolant(history: Sequence[NodalField], k: float, t: float) -> NodalField:
    """
    Piecewise constant in time interpolant m^-_{h,k}(t) = m^(j) on [t_j, t_{j+1}), clamped to the levels.
    """
    _check_history(history)
    return history[min(max(time_level(t, k), 0), len(history) - 1)]


class PathSimulator:
    """
    Frame, assemble, solve and project pipeline for one mesh, parameter set and noise coefficient.

    The mesh, stiffness matrix, lumped weights and noise coefficient are shared read-only; every path keeps its own PathState.
    """

    def __init__(self, mesh: Mesh, params: SchemeParams, nc: NoiseCoefficient, initial: NodalField, tolerance: float = DEFAULT_SOLVER_TOLERANCE, stiffness: Optional[SparseMatrix] = None):  # pylint: disable=too-many-arguments
        self.mesh = mesh
        self.params = params
        self.nc = nc
        self.tolerance = tolerance
        self.stiffness = stiffness if stiffness is not None else assemble_stiffness(mesh)
        self.weights = lumped_mass_weights(mesh)
        if not initial.mesh.is_same(mesh):
            raise FieldError(f"Initial datum lives on {initial.mesh}, expected {mesh}.")
        drift = np.abs(initial.moduli() - 1.0)
        if drift.max() > INITIAL_DATUM_TOLERANCE:
            LOG.info("Initial datum drifts from unit modulus by up to %.3e; renormalizing.", drift.max())
            initial = project_to_sphere(initial)
        self.initial = initial
        self.warning = stability_warning(params, mesh.h)
        if self.warning:
            LOG.warning("%s", self.warning)

    def initial_state(self) -> PathState:
        """
        State at j = 0.
        """
        return PathState(j=0, m=self.initial.copy(), energy_trace=[gradient_energy(self.initial, self.stiffness)])

    def solve(self, state: PathState, wk_value: float) -> StepSolution:
        """
        Computes the tangential update of the current step.
        """
        frame = build_tangent_frame(state.m)
        r_field = r_hk_apply(state.j, state.m, wk_value, self.nc, self.params.lambda1, self.params.lambda2)
        system = assemble_step_system(state.m, frame, self.params, r_field, self.stiffness, self.weights)
        return solve_step(system, self.tolerance, step_index=state.j)

    def step(self, state: PathState, wk_value: float) -> Tuple[PathState, StepSolution]:
        """
        One full step; returns the new state and the solution of the step.
        """
        solution = self.solve(state, wk_value)
        return advance(state, self.params, solution, self.stiffness, self.weights), solution
