"""
sllg_fem.fem_core module.

P1 finite element primitives: nodal vector fields, interpolation, stiffness and lumped mass assembly, norms and the nodal sphere projection.
"""
import logging
import math
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse

from sllg_fem.mesh import Mesh, MeshError

LOG = logging.getLogger(__name__)

SparseMatrix = sparse.csr_matrix


class FieldError(ValueError):
    """
    Raised when a nodal field is malformed or an operation on it is undefined.
    """


class NodalField:
    """
    Piecewise linear vector field, stored as one 3-vector per mesh node.
    """

    def __init__(self, mesh: Mesh, values: Union[np.ndarray, list]):
        array = np.array(values, dtype=float)
        if array.shape != (mesh.node_count, 3):
            raise FieldError(f"Expected nodal values of shape ({mesh.node_count}, 3), got {array.shape}.")
        if not np.all(np.isfinite(array)):
            raise FieldError(f"Nodal values contain {int(np.count_nonzero(~np.isfinite(array)))} non-finite entries.")
        self.mesh = mesh
        self.values = array

    @classmethod
    def zeros(cls, mesh: Mesh) -> "NodalField":
        """
        Zero field on the mesh.
        """
        return cls(mesh, np.zeros((mesh.node_count, 3)))

    @classmethod
    def constant(cls, mesh: Mesh, vector) -> "NodalField":
        """
        Field with the same value at every node.
        """
        return cls(mesh, np.tile(np.asarray(vector, dtype=float), (mesh.node_count, 1)))

    def copy(self) -> "NodalField":
        """
        Returns a deep copy sharing the mesh.
        """
        return NodalField(self.mesh, self.values.copy())

    def moduli(self) -> np.ndarray:
        """
        Euclidean length of every nodal value.
        """
        return np.linalg.norm(self.values, axis=1)

    def check_same_mesh(self, other: "NodalField") -> None:
        """
        Raises FieldError if other lives on a different mesh.
        """
        if not self.mesh.is_same(other.mesh):
            raise FieldError(f"Fields live on different meshes: {self.mesh} and {other.mesh}.")

    def __add__(self, other: "NodalField") -> "NodalField":
        self.check_same_mesh(other)
        return NodalField(self.mesh, self.values + other.values)

    def __sub__(self, other: "NodalField") -> "NodalField":
        self.check_same_mesh(other)
        return NodalField(self.mesh, self.values - other.values)

    def __mul__(self, scalar: float) -> "NodalField":
        return NodalField(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"NodalField(nodes={self.mesh.node_count})"


def interpolate(mesh: Mesh, f: Union[Callable, np.ndarray, list, tuple], vectorized: bool = False) -> NodalField:
    """
    Nodal interpolant of f onto the P1 space.

    f may be an array of nodal samples with shape (N, 3), a single 3-vector (constant field) or a callable; a callable is evaluated node by node with a 2D point, or once with the (N, 2) node array if vectorized is set.
    """
    if callable(f):
        if vectorized:
            samples = np.asarray(f(mesh.nodes), dtype=float)
        else:
            samples = np.array([f(point) for point in mesh.nodes], dtype=float)
    else:
        samples = np.asarray(f, dtype=float)
        if samples.shape == (3,):
            samples = np.tile(samples, (mesh.node_count, 1))
    if samples.shape != (mesh.node_count, 3):
        raise FieldError(f"Interpolated function must produce a 3-vector per node, got shape {samples.shape}.")
    if not np.all(np.isfinite(samples)):
        bad = np.flatnonzero(~np.all(np.isfinite(samples), axis=1))
        raise FieldError(f"Non-finite samples at nodes {bad[:10].tolist()}.")
    return NodalField(mesh, samples)


def assemble_stiffness(mesh: Mesh) -> SparseMatrix:
    """
    Scalar P1 stiffness matrix, integrated exactly (gradients are constant per element).
    """
    # (E, 3, 3) local matrices area * grad(phi_a) . grad(phi_b)
    local = mesh.areas[:, None, None] * np.einsum("eai,ebi->eab", mesh.gradients, mesh.gradients)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    stiffness = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.node_count, mesh.node_count)).tocsr()
    stiffness.sum_duplicates()
    return stiffness


def lumped_mass_weights(mesh: Mesh) -> np.ndarray:
    """
    Nodal quadrature weights: a third of the area of every element touching the node.
    """
    weights = np.zeros(mesh.node_count)
    np.add.at(weights, mesh.elements.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return weights


def assemble_lumped_mass(mesh: Mesh) -> SparseMatrix:
    """
    Diagonal lumped mass matrix.
    """
    return sparse.diags(lumped_mass_weights(mesh)).tocsr()


def gradient_energy(u: NodalField, stiffness: SparseMatrix) -> float:
    """
    Dirichlet energy ||grad u||^2 of a P1 vector field, summed over components.
    """
    if stiffness.shape != (u.mesh.node_count, u.mesh.node_count):
        raise MeshError(f"Stiffness matrix of shape {stiffness.shape} doesn't match a field with {u.mesh.node_count} nodes.")
    return float(np.sum(u.values * (stiffness @ u.values)))


def lumped_inner(u: NodalField, v: NodalField, weights: Optional[np.ndarray] = None) -> float:
    """
    L2 inner product with nodal quadrature.
    """
    u.check_same_mesh(v)
    if weights is None:
        weights = lumped_mass_weights(u.mesh)
    return float(np.sum(weights * np.sum(u.values * v.values, axis=1)))


def l2_norm(u: NodalField) -> float:
    """
    Exact L2 norm of the P1 field (consistent element mass), used as continuous reference for norm comparisons.
    """
    local = u.values[u.mesh.elements]  # (E, 3 nodes, 3 components)
    squares = np.sum(local**2, axis=(1, 2)) + np.sum(np.sum(local, axis=1) ** 2, axis=1)
    return math.sqrt(float(np.sum(u.mesh.areas / 12.0 * squares)))


def discrete_lp_norm(u: NodalField, p: float) -> float:
    """
    Discrete L^p norm (h^d sum_n |u(x_n)|^p)^(1/p), with the maximum nodal modulus for p = inf.
    """
    if not p >= 1:
        raise FieldError(f"Discrete L^p norm requires p >= 1, got {p}.")
    moduli = u.moduli()
    if math.isinf(p):
        return float(moduli.max()) if moduli.size else 0.0
    return float((u.mesh.h**2 * np.sum(moduli**p)) ** (1.0 / p))


def project_to_sphere(u: NodalField) -> NodalField:
    """
    Normalizes every nodal value to unit length.
    """
    moduli = u.moduli()
    zero = np.flatnonzero(moduli == 0.0)
    if zero.size:
        raise FieldError(f"Cannot project zero nodal vectors onto the sphere (nodes {zero[:10].tolist()}).")
    return NodalField(u.mesh, u.values / moduli[:, None])


def element_gradients(u: NodalField) -> np.ndarray:
    """
    Element-constant gradients of the P1 field, shape (E, 3 components, 2 directions).
    """
    local = u.values[u.mesh.elements]  # (E, 3 nodes, 3 components)
    return np.einsum("eac,eai->eci", local, u.mesh.gradients)


def edge_midpoint_values(u: NodalField) -> np.ndarray:
    """
    Field values at the three edge midpoints of every element, shape (E, 3, 3).
    """
    local = u.values[u.mesh.elements]
    return 0.5 * (local + np.roll(local, -1, axis=1))
