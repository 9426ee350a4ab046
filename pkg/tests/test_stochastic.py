"""
Tests for sllg_fem.stochastic.
"""
import math

import numpy as np
import pytest

from sllg_fem.fem_core import NodalField, gradient_energy
from sllg_fem.scheme import SolverError
from sllg_fem.stochastic import (
    CompensatedSum,
    EnsembleStats,
    EstimatorError,
    PathFailedError,
    error_Ehk,
    energy_trace,
    modulus_deficit_integral,
    path_error_squared,
    run_monte_carlo,
    run_paths,
    sample_path,
    simulate_path,
)


def test_brownian_path_grid_values():
    path = sample_path(7, 3, 10, 0.1)
    assert path.J == 10
    assert path.wk(0.0) == 0.0
    assert path.cumulative[0] == 0.0
    np.testing.assert_array_equal(path.cumulative[1:] - path.cumulative[:-1], path.increments)
    for j in range(10):
        t = j * 0.1
        assert path.wk(t) == path.cumulative[j]
        assert path.wk(t + 0.05) == path.cumulative[j]
        assert path.wk(t + 0.0999) == path.cumulative[j]
    assert path.wk(1.0) == path.cumulative[10]
    assert path.wk(3.0) == path.cumulative[10]
    assert path.wk(-1.0) == 0.0
    # Times just below a grid point keep the left-endpoint value
    assert path.wk(0.5 - 1e-11) == path.cumulative[4]
    assert path.wk(1.0 - 1e-11) == path.cumulative[9]


def test_brownian_path_regeneration_is_bitwise():
    first = sample_path(42, 5, 64, 1.0 / 64)
    second = sample_path(42, 5, 64, 1.0 / 64)
    assert first.cumulative.tobytes() == second.cumulative.tobytes()
    assert not np.array_equal(first.increments, sample_path(42, 6, 64, 1.0 / 64).increments)
    assert not np.array_equal(first.increments, sample_path(43, 5, 64, 1.0 / 64).increments)


def test_brownian_variance():
    final_values = np.array([sample_path(2024, index, 10, 0.1).wk_at_step(10) for index in range(10000)])
    assert np.var(final_values, ddof=1) == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("J, k, seed", [(0, 0.1, 1), (4, 0.0, 1), (4, 0.1, -1)])
def test_sample_path_rejects_bad_arguments(J, k, seed):  # pylint: disable=invalid-name
    with pytest.raises(EstimatorError):
        sample_path(seed, 0, J, k)


def test_modulus_deficit_examples(single_element_mesh):
    unit = NodalField.constant(single_element_mesh, (0.0, 1.0, 0.0))
    assert modulus_deficit_integral(unit) == 0.0
    short = NodalField.constant(single_element_mesh, (0.9, 0.0, 0.0))
    k = 0.25
    area = single_element_mesh.area
    assert error_Ehk([[short]], k) == pytest.approx(0.1 * math.sqrt(area * k), rel=1e-12)
    assert path_error_squared([short, unit], k) == pytest.approx(k * 0.01 * area, rel=1e-12)


def test_error_estimator_rejects_empty_input(single_element_mesh):
    with pytest.raises(EstimatorError):
        error_Ehk([], 0.1)
    with pytest.raises(EstimatorError):
        error_Ehk([[]], 0.1)


def test_energy_trace_of_raw_traces():
    np.testing.assert_array_equal(energy_trace([[3.0, 2.0, 1.0]]), [3.0, 2.0, 1.0])
    np.testing.assert_allclose(energy_trace([[3.0, 2.0], [1.0, 0.0]]), [2.0, 1.0])
    with pytest.raises(EstimatorError, match="different lengths"):
        energy_trace([[1.0, 2.0], [1.0]])
    with pytest.raises(EstimatorError):
        energy_trace([])


def test_compensated_sum_is_order_independent(rng):
    samples = rng.standard_normal((200, 7)) * 10.0 ** rng.integers(-8, 8, size=(200, 1))
    forward, backward = CompensatedSum((7,)), CompensatedSum((7,))
    for sample in samples:
        forward.add(sample)
    for sample in samples[::-1]:
        backward.add(sample)
    np.testing.assert_allclose(forward.value, backward.value, rtol=1e-12, atol=1e-12 * np.abs(samples).max())
    assert forward.count == 200


def test_simulate_path_records_and_rotation_invariance(small_simulator):
    params = small_simulator.params
    path = sample_path(42, 0, params.J, params.k)
    result = simulate_path(small_simulator, path, snapshot_steps=[0, 4, 8], keep_history=True)
    assert [record.j for record in result.records] == list(range(params.J))
    assert len(result.M_energy) == params.J + 1
    assert len(result.deficits) == params.J
    assert len(result.history) == params.J
    assert sorted(result.snapshots) == [0, 4, 8]
    # g is spatially constant, so the rotation commutes with the gradient
    np.testing.assert_allclose(result.M_energy, result.state.energy_trace, rtol=1e-12)
    assert result.M_energy[0] == pytest.approx(gradient_energy(small_simulator.initial, small_simulator.stiffness))
    assert result.error_squared == pytest.approx(path_error_squared(result.history, params.k))
    assert result.max_sphere_drift <= 1e-12
    assert result.max_tangency <= 1e-10


def test_simulate_path_with_non_constant_noise(twist_simulator):
    params = twist_simulator.params
    result = simulate_path(twist_simulator, sample_path(42, 1, params.J, params.k))
    assert result.max_sphere_drift <= 1e-12
    assert np.all(np.isfinite(result.M_energy))


def test_simulate_path_rejects_mismatched_path(small_simulator):
    with pytest.raises(EstimatorError):
        simulate_path(small_simulator, sample_path(42, 0, small_simulator.params.J + 1, 0.1))


def test_single_path_ensemble_equals_path(small_simulator):
    params = small_simulator.params
    stats = run_paths(small_simulator, 1, 42, snapshot_steps=[8])
    result = simulate_path(small_simulator, sample_path(42, 0, params.J, params.k), snapshot_steps=[8])
    np.testing.assert_array_equal(stats.mean_energy(), result.M_energy)
    np.testing.assert_array_equal(stats.std_energy(), 0.0)
    assert stats.error_Ehk() == pytest.approx(math.sqrt(result.error_squared), rel=1e-15)
    np.testing.assert_array_equal(stats.mean_field(8).values, result.snapshots[8].values)
    np.testing.assert_array_equal(energy_trace(stats), stats.mean_energy())


def test_ensemble_is_deterministic_across_worker_counts(small_simulator):
    serial = run_paths(small_simulator, 4, 42, workers=1, snapshot_steps=[0, 8])
    threaded = run_paths(small_simulator, 4, 42, workers=3, snapshot_steps=[0, 8])
    assert serial.mean_energy().tobytes() == threaded.mean_energy().tobytes()
    assert serial.error_Ehk() == threaded.error_Ehk()
    assert serial.mean_field(8).values.tobytes() == threaded.mean_field(8).values.tobytes()
    # t = 0 is the interpolated initial datum for every path
    assert serial.mean_energy()[0] == pytest.approx(gradient_energy(small_simulator.initial, small_simulator.stiffness))


def test_ensemble_mean_is_permutation_invariant(small_simulator):
    params = small_simulator.params
    results = [simulate_path(small_simulator, sample_path(11, index, params.J, params.k)) for index in range(5)]
    forward = EnsembleStats(small_simulator.mesh, params.J, params.k)
    backward = EnsembleStats(small_simulator.mesh, params.J, params.k)
    for result in results:
        forward.add(result)
    for result in reversed(results):
        backward.add(result)
    np.testing.assert_allclose(forward.mean_energy(), backward.mean_energy(), rtol=1e-12)
    assert forward.error_Ehk() == pytest.approx(backward.error_Ehk(), rel=1e-12)
    assert np.all(forward.std_energy() >= 0.0)


def test_ensemble_errors(small_simulator):
    params = small_simulator.params
    stats = EnsembleStats(small_simulator.mesh, params.J, params.k, snapshot_steps=[0])
    with pytest.raises(EstimatorError):
        stats.mean_energy()
    stats.add(simulate_path(small_simulator, sample_path(1, 0, params.J, params.k), snapshot_steps=[0]))
    with pytest.raises(EstimatorError, match="snapshot"):
        stats.mean_field(3)
    with pytest.raises(EstimatorError):
        run_paths(small_simulator, 0, 42)


def test_path_failure_reports_index_and_seed(small_simulator, monkeypatch):
    def failing(simulator, path, snapshot_steps=(), keep_history=False):  # pylint: disable=unused-argument
        if path.path_index == 2:
            raise SolverError("Step 5: GMRES did not converge (residual 1.0e-03).", step_index=5, residual=1e-3)
        return simulate_path(simulator, path, snapshot_steps)

    monkeypatch.setattr("sllg_fem.stochastic.simulate_path", failing)
    with pytest.raises(PathFailedError) as info:
        run_paths(small_simulator, 4, 99)
    assert info.value.path_index == 2
    assert info.value.seed == 99
    assert isinstance(info.value.cause, SolverError)
    assert "Step 5" in str(info.value)


def test_run_monte_carlo_from_config(small_config):
    stats = run_monte_carlo(small_config)
    assert stats.path_count == small_config.paths
    assert stats.J == 8
    assert sorted(stats.snapshots) == small_config.snapshot_schedule(8)
    coarse = run_monte_carlo(small_config.copy(update={"steps": None}), n=5, snapshot_steps=[])
    assert coarse.J == 5
    assert coarse.error_Ehk() >= 0.0
