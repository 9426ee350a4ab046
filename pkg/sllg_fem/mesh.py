"""
sllg_fem.mesh module.

Triangulations of planar polygons, their P1 element geometry and the non-obtuse mesh condition.
"""
import logging
from collections import Counter
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from sllg_fem.constants import MESH_CONDITION_TOLERANCE

LOG = logging.getLogger(__name__)


class MeshError(ValueError):
    """
    Raised when a triangulation is invalid or doesn't match another object.
    """


class MeshConditionReport(NamedTuple):
    """
    Result of check_mesh_condition.
    """

    ok: bool
    violations: List[Tuple[int, int]]


class Mesh:
    """
    Conforming triangulation of a planar domain.

    Arrays are read-only after construction, so a mesh can be shared between concurrent paths.
    """

    def __init__(self, nodes: Sequence[Sequence[float]], elements: Sequence[Sequence[int]], boundary_nodes: Optional[Sequence[int]] = None):
        node_array = np.array(nodes, dtype=float)
        element_array = np.array(elements, dtype=np.int64)
        if node_array.ndim != 2 or node_array.shape[1] != 2:
            raise MeshError(f"Nodes must be an array of 2D coordinates, got shape {node_array.shape}.")
        if element_array.ndim != 2 or element_array.shape[1] != 3:
            raise MeshError(f"Elements must be an array of node index triples, got shape {element_array.shape}.")
        if element_array.size and (element_array.min() < 0 or element_array.max() >= len(node_array)):
            raise MeshError(f"Element node indices out of range [0, {len(node_array)}).")

        self.nodes = node_array
        self.elements = element_array

        p0 = node_array[element_array[:, 0]]
        p1 = node_array[element_array[:, 1]]
        p2 = node_array[element_array[:, 2]]
        twice_signed_area = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
        degenerate = np.flatnonzero(np.abs(twice_signed_area) <= 1e-14 * np.maximum(1.0, np.abs(node_array).max() ** 2))
        if degenerate.size:
            raise MeshError(f"Degenerate elements with zero area: {degenerate.tolist()}.")
        self.areas = 0.5 * np.abs(twice_signed_area)

        # Gradients of the barycentric basis functions, constant per element: (E, 3 local nodes, 2)
        grads = np.empty((len(element_array), 3, 2))
        grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
        grads[:, 0, 1] = p2[:, 0] - p1[:, 0]
        grads[:, 1, 0] = p2[:, 1] - p0[:, 1]
        grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
        grads[:, 2, 0] = p0[:, 1] - p1[:, 1]
        grads[:, 2, 1] = p1[:, 0] - p0[:, 0]
        self.gradients = grads / twice_signed_area[:, None, None]

        edge_lengths = np.stack([np.linalg.norm(p1 - p0, axis=1), np.linalg.norm(p2 - p1, axis=1), np.linalg.norm(p0 - p2, axis=1)], axis=1)
        self.h = float(edge_lengths.max()) if edge_lengths.size else 0.0

        self.edges, self.edge_counts = self._collect_edges(element_array)
        overloaded = [tuple(edge) for edge, count in zip(self.edges, self.edge_counts) if count > 2]
        if overloaded:
            raise MeshError(f"Non-conforming mesh: edges shared by more than two elements: {overloaded}.")

        if boundary_nodes is None:
            boundary_nodes = np.unique(self.edges[self.edge_counts == 1])
        self.boundary_nodes = np.array(sorted(set(int(i) for i in boundary_nodes)), dtype=np.int64)

        for array in (self.nodes, self.elements, self.areas, self.gradients, self.edges, self.edge_counts, self.boundary_nodes):
            array.setflags(write=False)

    @staticmethod
    def _collect_edges(elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        counter: Counter = Counter()
        for tri in elements:
            a, b, c = (int(x) for x in tri)
            for edge in ((a, b), (b, c), (c, a)):
                counter[(min(edge), max(edge))] += 1
        keys = sorted(counter)
        return np.array(keys, dtype=np.int64).reshape(-1, 2), np.array([counter[key] for key in keys], dtype=np.int64)

    @property
    def node_count(self) -> int:
        """
        Number of vertices.
        """
        return len(self.nodes)

    @property
    def element_count(self) -> int:
        """
        Number of triangles.
        """
        return len(self.elements)

    @property
    def area(self) -> float:
        """
        Total area of the triangulated domain.
        """
        return float(self.areas.sum())

    @property
    def boundary_edges(self) -> np.ndarray:
        """
        Edges belonging to a single element.
        """
        return self.edges[self.edge_counts == 1]

    def is_same(self, other: "Mesh") -> bool:
        """
        True if both objects describe the same triangulation.
        """
        if self is other:
            return True
        return self.nodes.shape == other.nodes.shape and self.elements.shape == other.elements.shape and np.array_equal(self.nodes, other.nodes) and np.array_equal(self.elements, other.elements)

    def __repr__(self) -> str:
        return f"Mesh(nodes={self.node_count}, elements={self.element_count}, h={self.h:.6g})"


def uniform_unit_square_mesh(n: int) -> Mesh:
    """
    Uniform mesh of (-0.5, 0.5)^2 with n cells per side, each cell split along its bottom-left to top-right diagonal.

    Node (i, j) at (-0.5 + i/n, -0.5 + j/n) has index i * (n + 1) + j.
    """
    if n < 1:
        raise MeshError(f"Number of subdivisions must be positive, got {n}.")
    coords = -0.5 + np.arange(n + 1) / n
    xs, ys = np.meshgrid(coords, coords, indexing="ij")
    nodes = np.stack([xs.ravel(), ys.ravel()], axis=1)

    def index(i, j):
        return i * (n + 1) + j

    elements = []
    boundary = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)
            elements.append((a, b, c))
            elements.append((a, c, d))
    for i in range(n + 1):
        for j in range(n + 1):
            if i in (0, n) or j in (0, n):
                boundary.append(index(i, j))
    mesh = Mesh(nodes, elements, boundary)
    LOG.debug("Built uniform unit square mesh: %s.", mesh)
    return mesh


def check_mesh_condition(mesh: Mesh, stiffness: sparse.spmatrix, tolerance: float = MESH_CONDITION_TOLERANCE) -> MeshConditionReport:
    """
    Checks that every off-diagonal entry of the scalar P1 stiffness matrix is non-positive (up to tolerance).

    Under this condition the nodal projection onto the sphere doesn't increase the Dirichlet energy.
    """
    if stiffness.shape != (mesh.node_count, mesh.node_count):
        raise MeshError(f"Stiffness matrix of shape {stiffness.shape} doesn't match a mesh with {mesh.node_count} nodes.")
    coo = sparse.coo_matrix(stiffness)
    coo.sum_duplicates()
    mask = (coo.row != coo.col) & (coo.data > tolerance)
    violations = sorted((int(i), int(j)) for i, j in zip(coo.row[mask], coo.col[mask]))
    if violations:
        LOG.warning("Mesh condition violated by %s off-diagonal stiffness entries.", len(violations))
    return MeshConditionReport(ok=not violations, violations=violations)
