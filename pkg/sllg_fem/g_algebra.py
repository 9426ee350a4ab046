"""
sllg_fem.g_algebra module.

Pointwise operator calculus of the noise coefficient g: G u = u x g, the rotation group exp(sG), the correction operators C_h, D_{h,k}, C~_{h,k} and R_{h,k}, and the 3x3 cross-shift solve.
"""
import logging
import math
from typing import Callable, Dict, NamedTuple, Optional, Sequence

import numpy as np

from sllg_fem.constants import NOISE_MODULUS_TOLERANCE
from sllg_fem.fem_core import FieldError, NodalField, element_gradients
from sllg_fem.mesh import Mesh

LOG = logging.getLogger(__name__)


class OperatorError(ValueError):
    """
    Raised when an operator receives arguments outside its domain.
    """


class AnalyticNoise(NamedTuple):
    """
    Closed-form unit vector field g with its first derivatives and Laplacian, all vectorized over (N, 2) points.
    """

    g: Callable[[np.ndarray], np.ndarray]
    grad_g: Callable[[np.ndarray], np.ndarray]
    lap_g: Callable[[np.ndarray], np.ndarray]
    description: str


def _planar_twist(wave_x: float, wave_y: float, description: str) -> AnalyticNoise:
    """
    g = (cos phi, sin phi, 0) with phi = pi (wave_x x + wave_y y).
    """

    def phase(points):
        return math.pi * (wave_x * points[:, 0] + wave_y * points[:, 1])

    def g(points):
        phi = phase(points)
        return np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=1)

    def grad_g(points):
        phi = phase(points)
        tangent = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=1)
        return math.pi * np.stack([wave_x * tangent, wave_y * tangent], axis=2)

    def lap_g(points):
        return -(math.pi**2) * (wave_x**2 + wave_y**2) * g(points)

    return AnalyticNoise(g=g, grad_g=grad_g, lap_g=lap_g, description=description)


NOISE_CATALOG: Dict[str, AnalyticNoise] = {
    "twist-x": _planar_twist(1.0, 0.0, "g = (cos pi x, sin pi x, 0)"),
    "twist-xy": _planar_twist(1.0, 1.0, "g = (cos pi(x+y), sin pi(x+y), 0)"),
}


class NoiseCoefficient:
    """
    Nodal samples of g, its partial derivatives and its Laplacian.
    """

    def __init__(self, mesh: Mesh, g: np.ndarray, grad_g: np.ndarray, lap_g: np.ndarray, is_constant: bool = False, label: str = ""):
        g = np.array(g, dtype=float)
        grad_g = np.array(grad_g, dtype=float)
        lap_g = np.array(lap_g, dtype=float)
        count = mesh.node_count
        if g.shape != (count, 3) or grad_g.shape != (count, 3, 2) or lap_g.shape != (count, 3):
            raise OperatorError(f"Noise samples have shapes {g.shape}, {grad_g.shape}, {lap_g.shape}; expected ({count}, 3), ({count}, 3, 2), ({count}, 3).")
        drift = np.abs(np.linalg.norm(g, axis=1) - 1.0)
        if drift.size and drift.max() > NOISE_MODULUS_TOLERANCE:
            raise OperatorError(f"Noise coefficient must have unit modulus at every node (max drift {drift.max():.3e}).")
        self.mesh = mesh
        self.g = g
        self.grad_g = grad_g
        self.lap_g = lap_g
        self.is_constant = is_constant
        self.label = label
        # Centroid values of the interpolated partial derivatives, (E, 3, 2)
        self.element_grad_g = grad_g[mesh.elements].mean(axis=1)
        for array in (self.g, self.grad_g, self.lap_g, self.element_grad_g):
            array.setflags(write=False)

    @classmethod
    def constant(cls, mesh: Mesh, vector: Sequence[float]) -> "NoiseCoefficient":
        """
        Spatially constant unit vector g.
        """
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (3,):
            raise OperatorError(f"Constant noise coefficient must be a 3-vector, got shape {vector.shape}.")
        count = mesh.node_count
        label = ",".join(f"{x:g}" for x in vector)
        return cls(mesh, np.tile(vector, (count, 1)), np.zeros((count, 3, 2)), np.zeros((count, 3)), is_constant=True, label=label)

    @classmethod
    def from_analytic(cls, mesh: Mesh, analytic: AnalyticNoise, label: str = "") -> "NoiseCoefficient":
        """
        Samples a closed-form g and its derivatives at the mesh nodes.
        """
        points = mesh.nodes
        return cls(mesh, analytic.g(points), analytic.grad_g(points), analytic.lap_g(points), is_constant=False, label=label or analytic.description)

    @classmethod
    def from_catalog(cls, mesh: Mesh, catalog_id: str) -> "NoiseCoefficient":
        """
        Samples one of the analytic coefficients of NOISE_CATALOG.
        """
        if catalog_id not in NOISE_CATALOG:
            raise OperatorError(f"Unknown noise coefficient '{catalog_id}'; available: {', '.join(sorted(NOISE_CATALOG))}.")
        return cls.from_analytic(mesh, NOISE_CATALOG[catalog_id], label=catalog_id)

    def as_field(self) -> NodalField:
        """
        The interpolant I_h(g) as a nodal field.
        """
        return NodalField(self.mesh, self.g)


def _check_mesh(u: NodalField, nc: NoiseCoefficient) -> None:
    if not u.mesh.is_same(nc.mesh):
        raise FieldError(f"Field on {u.mesh} and noise coefficient on {nc.mesh} live on different meshes.")


def g_apply(u: NodalField, nc: NoiseCoefficient) -> NodalField:
    """
    G_h u = u x I_h(g), nodewise.
    """
    _check_mesh(u, nc)
    return NodalField(u.mesh, np.cross(u.values, nc.g))


def g_power_apply(power: int, u: NodalField, nc: NoiseCoefficient) -> NodalField:
    """
    G_h applied power times.
    """
    if power < 0:
        raise OperatorError(f"Negative powers of G are undefined, got {power}.")
    _check_mesh(u, nc)
    values = u.values
    for _ in range(power):
        values = np.cross(values, nc.g)
    return NodalField(u.mesh, values)


def exp_sg_apply(s: float, u: NodalField, nc: NoiseCoefficient) -> NodalField:
    """
    exp(sG) u = u + sin(s) G u + (1 - cos s) G^2 u, a rotation about g at every node.
    """
    _check_mesh(u, nc)
    gu = np.cross(u.values, nc.g)
    g2u = np.cross(gu, nc.g)
    return NodalField(u.mesh, u.values + math.sin(s) * gu + (1.0 - math.cos(s)) * g2u)


def c_h_apply(u: NodalField, nc: NoiseCoefficient, grad_u: Optional[np.ndarray] = None) -> NodalField:
    """
    C_h(u) = u x I_h(lap g) + 2 sum_i du/dx_i x I_h(dg/dx_i).

    The gradient term is constant per element (evaluated with the centroid value of I_h(dg/dx_i)) and recovered at the nodes by an area-weighted average over incident elements.
    """
    _check_mesh(u, nc)
    mesh = u.mesh
    if nc.is_constant:
        return NodalField.zeros(mesh)
    if grad_u is None:
        grad_u = element_gradients(u)
    elif grad_u.shape != (mesh.element_count, 3, 2):
        raise OperatorError(f"Element gradients must have shape ({mesh.element_count}, 3, 2), got {grad_u.shape}.")

    element_term = 2.0 * np.cross(grad_u, nc.element_grad_g, axis=1).sum(axis=2)  # (E, 3)
    weighted = np.zeros((mesh.node_count, 3))
    area_sum = np.zeros(mesh.node_count)
    for local in range(3):
        nodes = mesh.elements[:, local]
        np.add.at(weighted, nodes, mesh.areas[:, None] * element_term)
        np.add.at(area_sum, nodes, mesh.areas)
    recovered = weighted / area_sum[:, None]
    return NodalField(mesh, np.cross(u.values, nc.lap_g) + recovered)


def r_hk_apply(t_index: int, u: NodalField, wk_value: float, nc: NoiseCoefficient, lambda1: float = 1.0, lambda2: float = 1.0) -> NodalField:
    """
    R_{h,k}(t_j, u) = lambda2^2 u x (u x C~_{h,k}) - lambda1^2 C~_{h,k}, where

    D_{h,k} = (sin W_k C_h + (1 - cos W_k)(G_h C_h + C_h G_h)) u and
    C~_{h,k} = (I - sin W_k G_h + (1 - cos W_k) G_h^2) D_{h,k}.
    """
    _check_mesh(u, nc)
    if nc.is_constant:
        return NodalField.zeros(u.mesh)
    sin_w = math.sin(wk_value)
    one_minus_cos_w = 1.0 - math.cos(wk_value)
    c_u = c_h_apply(u, nc).values
    c_gu = c_h_apply(g_apply(u, nc), nc).values
    d_values = sin_w * c_u + one_minus_cos_w * (np.cross(c_u, nc.g) + c_gu)
    gd = np.cross(d_values, nc.g)
    c_tilde = d_values - sin_w * gd + one_minus_cos_w * np.cross(gd, nc.g)
    r_values = lambda2**2 * np.cross(u.values, np.cross(u.values, c_tilde)) - lambda1**2 * c_tilde
    LOG.debug("R_hk at step %s (W_k=%.6g): max nodal modulus %.6g.", t_index, wk_value, float(np.linalg.norm(r_values, axis=1).max()))
    return NodalField(u.mesh, r_values)


def cross_shift_matrix(lambda1: float, lambda2: float, zeta: Sequence[float]) -> np.ndarray:
    """
    Matrix A with A phi = lambda1 phi + lambda2 phi x zeta.
    """
    z1, z2, z3 = (float(x) for x in zeta)
    return np.array(
        [
            [lambda1, lambda2 * z3, -lambda2 * z2],
            [-lambda2 * z3, lambda1, lambda2 * z1],
            [lambda2 * z2, -lambda2 * z1, lambda1],
        ]
    )


def cross_shift_solve(lambda1: float, lambda2: float, zeta: Sequence[float], psi: Sequence[float]) -> np.ndarray:
    """
    Solves lambda1 phi + lambda2 phi x zeta = psi for phi; det A = lambda1 (lambda1^2 + lambda2^2).
    """
    if lambda1 == 0:
        raise OperatorError("Cross-shift solve requires lambda1 != 0.")
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (3,) or abs(np.linalg.norm(zeta) - 1.0) > NOISE_MODULUS_TOLERANCE:
        raise OperatorError(f"zeta must be a unit 3-vector, got {zeta.tolist()}.")
    return np.linalg.solve(cross_shift_matrix(lambda1, lambda2, zeta), np.asarray(psi, dtype=float))
