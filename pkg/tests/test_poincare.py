import numpy as np
import pytest

from slv_core.errors import PreconditionFailed
from slv_core.model import derive_constants
from slv_core.poincare import (Fate, closed_curve_residual, conjugacy_max_residual, conjugacy_residual,
                               injectivity_gap, invariant_set_residual, iterate, iterate_batch,
                               map_with_jacobian, poincare_jacobian, poincare_map, poincare_map_batch)
from slv_core.simplex import portrait_initial_points


def test_axial_point_is_fixed(identity):
    rho = derive_constants(identity).rho_star
    q1 = np.array([rho, 0.0, 0.0])
    np.testing.assert_allclose(poincare_map(identity, q1), q1, atol=1e-9)


def test_origin_is_fixed(ml_attractor):
    np.testing.assert_array_equal(poincare_map(ml_attractor, np.zeros(3)), np.zeros(3))


@pytest.mark.parametrize("k", [0, 1, 10])
def test_conjugacy_single_points(ml_center, rng, k):
    for x in rng.uniform(0.01, 1.0, size=(3, 3)):
        assert conjugacy_residual(ml_center, x, k) <= 1e-6


def test_conjugacy_batch(ml_center, rng):
    X0 = rng.uniform(0.01, 1.0, size=(20, 3))
    assert conjugacy_max_residual(ml_center, X0, (1, 10, 50)) <= 1e-6


def test_batch_map_matches_single_map(ml_attractor, rng):
    X = rng.uniform(0.01, 1.0, size=(5, 3))
    np.testing.assert_allclose(poincare_map_batch(ml_attractor, X),
                               np.array([poincare_map(ml_attractor, x) for x in X]), atol=1e-9)


def test_jacobian_matches_finite_differences(ml_attractor):
    x = np.array([0.3, 0.2, 0.4])
    _, jac = map_with_jacobian(ml_attractor, x, tol=1e-12)
    h = 1e-5
    fd = np.column_stack([
        (poincare_map(ml_attractor, x + h * e, 1e-12) - poincare_map(ml_attractor, x - h * e, 1e-12)) / (2 * h)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(jac, fd, atol=1e-6)


def test_jacobian_needs_interior_point(ml_attractor):
    with pytest.raises(PreconditionFailed) as info:
        poincare_jacobian(ml_attractor, [0.3, 0.0, 0.2])
    assert info.value.code == "not_interior"


def test_iterate_requires_positive_budget(ml_attractor):
    with pytest.raises(PreconditionFailed):
        iterate(ml_attractor, [0.1, 0.1, 0.1], 0)


def test_iterate_stops_at_fixed_point(ml_attractor):
    p = derive_constants(ml_attractor).rho_star * np.full(3, 1.0 / 2.7)
    trace = iterate(ml_attractor, p, 100)
    assert trace.fate is Fate.CONVERGED
    assert trace.k == 1
    np.testing.assert_allclose(trace.limit, p, atol=1e-9)


def test_short_budget_is_undecided(ml_attractor):
    traces = iterate_batch(ml_attractor, [[0.3, 0.2, 0.1], [0.1, 0.4, 0.2]], 5)
    assert [t.fate for t in traces] == [Fate.UNDECIDED, Fate.UNDECIDED]
    assert all(t.points.shape == (6, 3) for t in traces)


@pytest.mark.slow
def test_class_27a_orbit_converges(ml_attractor):
    p = derive_constants(ml_attractor).rho_star * np.full(3, 1.0 / 2.7)
    trace = iterate(ml_attractor, [0.3, 0.2, 0.1], 5000)
    assert trace.fate is Fate.CONVERGED
    np.testing.assert_allclose(trace.limit, p, atol=1e-5)


@pytest.mark.slow
def test_class_27b_orbit_approaches_boundary(ml_heteroclinic):
    trace = iterate(ml_heteroclinic, [0.2, 0.25, 0.15], 5000)
    assert trace.fate is Fate.NEAR_BOUNDARY_CYCLE
    assert trace.min_coordinate < 1e-3


E1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
E2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6)


def _circle(angles, radius=0.04, centre=0.3):
    return centre + radius * np.outer(np.cos(angles), E1) + radius * np.outer(np.sin(angles), E2)


def test_closed_curve_residual_on_a_rotating_circle():
    # irrational rotation: the earlier iterates fill the circle the last ones land on
    points = _circle(0.37 * np.arange(2000))
    assert closed_curve_residual(points) < 1e-5
    assert closed_curve_residual(points, center=np.full(3, 0.3)) < 1e-5


def test_closed_curve_residual_on_a_finite_cycle():
    cycle = _circle(2 * np.pi * np.arange(3) / 3)
    assert closed_curve_residual(np.tile(cycle, (100, 1))) < 1e-12


def test_closed_curve_residual_rejects_partial_arcs_and_clouds(rng):
    # less than a revolution: the last iterates run past everything seen before
    assert closed_curve_residual(_circle(0.002 * np.arange(300))) > 1e-4
    assert closed_curve_residual(rng.uniform(0.0, 1.0, size=(300, 3))) > 1e-4
    assert closed_curve_residual(rng.uniform(0.0, 1.0, size=(10, 3))) == float("inf")


@pytest.mark.slow
def test_class_27c_orbit_lies_on_an_invariant_curve(ml_center):
    trace = iterate(ml_center, [0.4, 0.3, 0.33], 1500)
    assert trace.fate is Fate.ON_INVARIANT_CURVE
    assert trace.curve_residual < 1e-4


@pytest.mark.slow
def test_class_27c_interior_orbits_lie_on_invariant_curves(ml_center):
    X0 = np.vstack([portrait_initial_points(ml_center, 20, rng_seed=5), [[0.4, 0.3, 0.33]]])
    traces = iterate_batch(ml_center, X0, 3000)
    assert all(t.fate is not Fate.CONVERGED for t in traces)
    interior = [t for t in traces if t.points[len(t.points) // 2:].min() > 0.02]
    assert interior
    for trace in interior:
        assert trace.fate is Fate.ON_INVARIANT_CURVE, trace.curve_residual


def test_equilibrium_scales_to_a_fixed_point(ml_center):
    assert invariant_set_residual(ml_center, [np.full(3, 1.0 / 3.0)]) <= 1e-9


def test_map_is_injective_on_distinct_points(ml_attractor, rng):
    assert injectivity_gap(ml_attractor, rng.uniform(0.01, 1.0, size=(8, 3))) > 1e-6
