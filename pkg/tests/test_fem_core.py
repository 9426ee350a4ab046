"""
Tests for sllg_fem.fem_core.
"""
import math

import numpy as np
import pytest

from sllg_fem.fem_core import (
    FieldError,
    NodalField,
    assemble_lumped_mass,
    assemble_stiffness,
    discrete_lp_norm,
    edge_midpoint_values,
    element_gradients,
    gradient_energy,
    interpolate,
    l2_norm,
    lumped_inner,
    lumped_mass_weights,
    project_to_sphere,
)
from sllg_fem.mesh import uniform_unit_square_mesh


def test_nodal_field_validates_shape_and_values(mesh4):
    with pytest.raises(FieldError):
        NodalField(mesh4, np.zeros((mesh4.node_count, 2)))
    values = np.zeros((mesh4.node_count, 3))
    values[3, 1] = np.nan
    with pytest.raises(FieldError, match="non-finite"):
        NodalField(mesh4, values)


def test_fields_on_different_meshes_do_not_mix(mesh4):
    other = uniform_unit_square_mesh(3)
    with pytest.raises(FieldError):
        _ = NodalField.zeros(mesh4) + NodalField.zeros(other)


def test_interpolate_variants(mesh4):
    pointwise = interpolate(mesh4, lambda x: [x[0], x[1], 1.0])
    vectorized = interpolate(mesh4, lambda x: np.stack([x[:, 0], x[:, 1], np.ones(len(x))], axis=1), vectorized=True)
    np.testing.assert_array_equal(pointwise.values, vectorized.values)
    constant = interpolate(mesh4, (0.0, 0.0, 1.0))
    np.testing.assert_array_equal(constant.values, np.tile([0.0, 0.0, 1.0], (mesh4.node_count, 1)))
    with pytest.raises(FieldError):
        interpolate(mesh4, lambda x: [x[0], x[1]])
    with pytest.raises(FieldError, match="Non-finite"):
        interpolate(mesh4, lambda x: [math.inf, 0.0, 0.0])


def test_stiffness_is_symmetric_with_zero_row_sums(mesh4):
    stiffness = assemble_stiffness(mesh4).toarray()
    np.testing.assert_allclose(stiffness, stiffness.T, atol=1e-14)
    np.testing.assert_allclose(stiffness.sum(axis=1), 0.0, atol=1e-12)


def test_gradient_energy_of_linear_and_constant_fields(mesh4):
    stiffness = assemble_stiffness(mesh4)
    assert gradient_energy(NodalField.constant(mesh4, (0.3, -0.4, 0.5)), stiffness) == pytest.approx(0.0, abs=1e-14)
    linear = interpolate(mesh4, lambda x: [x[0], 2.0 * x[1], 0.0])
    # |grad|^2 = 1 + 4 over the unit square
    assert gradient_energy(linear, stiffness) == pytest.approx(5.0, rel=1e-12)


def test_lumped_mass(mesh4):
    weights = lumped_mass_weights(mesh4)
    assert weights.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(assemble_lumped_mass(mesh4).diagonal(), weights)
    field = NodalField.constant(mesh4, (1.0, 2.0, 2.0))
    assert lumped_inner(field, field) == pytest.approx(9.0)


def test_l2_norm_is_exact_for_linear_fields(mesh4):
    assert l2_norm(NodalField.constant(mesh4, (1.0, 0.0, 0.0))) == pytest.approx(1.0)
    # int x^2 over (-0.5, 0.5)^2 = 1/12
    assert l2_norm(interpolate(mesh4, lambda x: [x[0], 0.0, 0.0])) == pytest.approx(math.sqrt(1.0 / 12.0), rel=1e-12)


def test_discrete_lp_norm(mesh4, rng):
    field = NodalField(mesh4, rng.standard_normal((mesh4.node_count, 3)))
    assert discrete_lp_norm(field, math.inf) == pytest.approx(field.moduli().max())
    assert discrete_lp_norm(field, 2) == pytest.approx(math.sqrt(mesh4.h**2 * np.sum(field.moduli() ** 2)))
    with pytest.raises(FieldError):
        discrete_lp_norm(field, 0.5)


def test_discrete_and_continuous_norms_are_equivalent(rng):
    mesh = uniform_unit_square_mesh(8)
    for _ in range(100):
        field = NodalField(mesh, rng.standard_normal((mesh.node_count, 3)))
        ratio = discrete_lp_norm(field, 2) / l2_norm(field)
        assert 0.3 <= ratio <= 3.0


def test_project_to_sphere(mesh4, rng):
    field = NodalField(mesh4, 0.1 + rng.random((mesh4.node_count, 3)))
    np.testing.assert_allclose(project_to_sphere(field).moduli(), 1.0, atol=1e-15)
    with pytest.raises(FieldError, match="zero"):
        project_to_sphere(NodalField.zeros(mesh4))


@pytest.mark.parametrize("n", [4, 8, 16])
def test_projection_does_not_increase_energy(n, rng):
    mesh = uniform_unit_square_mesh(n)
    stiffness = assemble_stiffness(mesh)
    violations = 0
    for _ in range(100):
        directions = rng.standard_normal((mesh.node_count, 3))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        field = NodalField(mesh, directions * (1.0 + np.abs(rng.standard_normal(mesh.node_count)))[:, None])
        before = gradient_energy(field, stiffness)
        after = gradient_energy(project_to_sphere(field), stiffness)
        if after > before * (1.0 + 1e-12):
            violations += 1
    assert violations == 0


def test_element_gradients_of_linear_field(mesh4):
    field = interpolate(mesh4, lambda x: [x[0], x[1], 3.0 * x[0] - x[1]])
    expected = np.array([[1.0, 0.0], [0.0, 1.0], [3.0, -1.0]])
    np.testing.assert_allclose(element_gradients(field), np.broadcast_to(expected, (mesh4.element_count, 3, 2)), atol=1e-12)


def test_edge_midpoint_values_of_linear_field(mesh4):
    field = interpolate(mesh4, lambda x: [x[0], x[1], 1.0])
    midpoints = edge_midpoint_values(field)
    points = mesh4.nodes[mesh4.elements]
    expected_xy = 0.5 * (points + np.roll(points, -1, axis=1))
    np.testing.assert_allclose(midpoints[:, :, :2], expected_xy, atol=1e-15)
    np.testing.assert_allclose(midpoints[:, :, 2], 1.0)
