import math

import numpy as np
import pytest
from scipy.linalg import expm

from slv_core.errors import PreconditionFailed
from slv_core.flow import (flow_autonomous, flow_batch, flow_integral, logistic_solution, lv_jacobian,
                           lv_vector_field, rho_hat_by_quadrature, sample_trajectory, seasonal_logistic_map,
                           seasonal_solution, seasonal_trajectory)
from slv_core.model import derive_constants
from slv_core.poincare import poincare_map


def test_logistic_solution_closed_form():
    assert logistic_solution(1.0, 0.5, 0.0) == 0.5
    assert logistic_solution(1.0, 0.0, 5.0) == 0.0
    assert logistic_solution(2.0, 0.2, 1.0) == pytest.approx(0.2 / (0.2 + 0.8 * math.exp(-2.0)))
    assert logistic_solution(1.0, 0.3, 1e4) == pytest.approx(1.0)


def test_logistic_rejects_negative_start():
    with pytest.raises(PreconditionFailed):
        logistic_solution(1.0, -0.1, 1.0)


def test_seasonal_logistic_map_fixes_rho_star(standard_spec):
    consts = derive_constants(standard_spec)
    assert seasonal_logistic_map(standard_spec, consts.rho_star) == pytest.approx(consts.rho_star, abs=1e-14)


def test_rho_hat_quadrature_identity(standard_spec, ml_center, class26):
    for spec in (standard_spec, ml_center, class26, standard_spec.with_omega(7.5)):
        consts = derive_constants(spec)
        assert abs(rho_hat_by_quadrature(spec) - consts.rho_hat) <= 1e-8


def test_axis_flow_is_logistic(identity):
    x0 = np.array([0.3, 0.0, 0.0])
    res = flow_autonomous(identity.matrix, 1.0, x0, 2.0)
    assert res.state[0] == pytest.approx(logistic_solution(1.0, 0.3, 2.0), rel=1e-9)
    assert res.state[1] == 0.0 and res.state[2] == 0.0


def test_zero_time_is_identity(ml_attractor):
    x0 = np.array([0.1, 0.2, 0.3])
    res = flow_autonomous(ml_attractor.matrix, 1.0, x0, 0.0, with_variational=True)
    np.testing.assert_array_equal(res.state, x0)
    np.testing.assert_array_equal(res.jacobian, np.eye(3))


def test_negative_states_are_rejected(ml_attractor):
    with pytest.raises(PreconditionFailed):
        flow_autonomous(ml_attractor.matrix, 1.0, [0.1, -0.2, 0.3], 1.0)
    with pytest.raises(PreconditionFailed):
        flow_autonomous(ml_attractor.matrix, 1.0, [0.1, 0.2, 0.3], -1.0)


def test_variational_matches_finite_differences(ml_attractor):
    A, b, t = ml_attractor.matrix, 1.0, 1.5
    x0 = np.array([0.2, 0.3, 0.4])
    jac = flow_autonomous(A, b, x0, t, tol=1e-12, with_variational=True).jacobian

    h = 1e-5
    fd = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        plus = flow_autonomous(A, b, x0 + e, t, tol=1e-12).state
        minus = flow_autonomous(A, b, x0 - e, t, tol=1e-12).state
        fd[:, j] = (plus - minus) / (2 * h)
    np.testing.assert_allclose(jac, fd, atol=1e-6)


def test_jacobian_of_vector_field(ml_attractor, rng):
    A = ml_attractor.matrix
    x = rng.uniform(0.1, 1.0, 3)
    h = 1e-6
    fd = np.column_stack([
        (lv_vector_field(A, 1.0, x + h * e) - lv_vector_field(A, 1.0, x - h * e)) / (2 * h) for e in np.eye(3)
    ])
    np.testing.assert_allclose(lv_jacobian(A, 1.0, x), fd, atol=1e-8)


def test_batch_flow_matches_single_flows(ml_attractor, rng):
    X0 = rng.uniform(0.01, 1.0, size=(6, 3))
    batch = flow_batch(ml_attractor.matrix, 1.0, X0, 3.0)
    single = np.array([flow_autonomous(ml_attractor.matrix, 1.0, x, 3.0).state for x in X0])
    np.testing.assert_allclose(batch, single, atol=1e-8)


def test_flow_integral_at_equilibrium(ml_attractor):
    x_hat = np.full(3, 1.0 / 2.7)
    state, integral = flow_integral(ml_attractor.matrix, 1.0, x_hat, 4.0)
    np.testing.assert_allclose(state, x_hat, atol=1e-10)
    np.testing.assert_allclose(integral, 4.0 * x_hat, atol=1e-9)


def test_sample_trajectory_shapes(ml_attractor):
    times = np.linspace(0.0, 2.0, 11)
    samples = sample_trajectory(ml_attractor.matrix, 1.0, [0.1, 0.2, 0.3], times)
    assert samples.shape == (11, 3)
    np.testing.assert_allclose(samples[0], [0.1, 0.2, 0.3])
    assert sample_trajectory(ml_attractor.matrix, 1.0, [0.1, 0.2, 0.3], []).shape == (0, 3)


def test_seasonal_solution_phases(ml_attractor):
    spec = ml_attractor
    x0 = np.array([0.2, 0.3, 0.1])
    # inside the bad season the solution is pure decay
    np.testing.assert_allclose(seasonal_solution(spec, x0, 0.1), x0 * math.exp(-0.5 * 0.1))
    np.testing.assert_allclose(seasonal_solution(spec, x0, 0.5), derive_constants(spec).l * x0)
    # one full season is the Poincare map
    np.testing.assert_allclose(seasonal_solution(spec, x0, spec.omega), poincare_map(spec, x0), atol=1e-12)


def test_seasonal_trajectory_frame(ml_attractor):
    x0 = [0.2, 0.3, 0.1]
    frame = seasonal_trajectory(ml_attractor, x0, n_seasons=3, samples_per_season=20)
    assert list(frame.columns) == ["t", "season", "phase", "x1", "x2", "x3"]
    assert frame["t"].is_monotonic_increasing
    assert set(frame["phase"]) == {"bad", "good"}

    expected = np.asarray(x0, dtype=float)
    for _ in range(3):
        expected = poincare_map(ml_attractor, expected)
    np.testing.assert_allclose(frame[["x1", "x2", "x3"]].iloc[-1].to_numpy(), expected, atol=1e-9)


def test_flow_is_a_semigroup(ml_attractor):
    A = ml_attractor.matrix
    x0 = np.array([0.2, 0.3, 0.4])
    direct = flow_autonomous(A, 1.0, x0, 3.5).state
    composed = flow_autonomous(A, 1.0, flow_autonomous(A, 1.0, x0, 1.25).state, 2.25).state
    np.testing.assert_allclose(composed, direct, atol=1e-8)


def test_variational_flow_at_equilibrium_is_a_matrix_exponential(ml_attractor):
    A, t = ml_attractor.matrix, 2.0
    x_hat = np.full(3, 1.0 / 2.7)
    res = flow_autonomous(A, 1.0, x_hat, t, with_variational=True)
    np.testing.assert_allclose(res.state, x_hat, atol=1e-10)
    np.testing.assert_allclose(res.jacobian, expm(lv_jacobian(A, 1.0, x_hat) * t), atol=1e-7)


def test_interior_trajectories_stay_interior(ml_heteroclinic):
    x0 = [0.2, 0.25, 0.15]
    samples = sample_trajectory(ml_heteroclinic.matrix, 1.0, x0, np.linspace(0.0, 60.0, 601))
    assert samples.min() > 0

    frame = seasonal_trajectory(ml_heteroclinic, x0, n_seasons=40, samples_per_season=10)
    assert (frame[["x1", "x2", "x3"]].to_numpy() > 0).all()


def test_large_batches_keep_per_row_accuracy(ml_attractor, rng):
    X0 = rng.uniform(0.01, 1.0, size=(64, 3))
    batch = flow_batch(ml_attractor.matrix, 1.0, X0, 3.0)
    for i in (0, 31, 63):
        single = flow_autonomous(ml_attractor.matrix, 1.0, X0[i], 3.0).state
        np.testing.assert_allclose(batch[i], single, atol=1e-8)
