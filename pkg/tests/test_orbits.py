import math
import warnings

import numpy as np
import pytest

from slv_core.errors import NonhyperbolicWarning, PreconditionFailed
from slv_core.fixedpoints import positive_fixed_points
from slv_core.fixtures import may_leonard_matrix
from slv_core.model import derive_constants
from slv_core.orbits import (CurveKind, PeriodicOrbit, Section, construct_multiplicity, find_periodic_orbit,
                             half_period_gap, linearization_period, minimal_period_and_eta, multiplicity_summary,
                             period_survey, resonant_omega, subharmonic_residuals, verify_fixed_curve)
from slv_core.poincare import invariant_set_residual

ML_CENTER = np.array(may_leonard_matrix(1.5, 0.5))
X_HAT = np.full(3, 1.0 / 3.0)
SEED = X_HAT * np.array([1.1, 0.95, 1.0])


def _fake_orbit(T):
    return PeriodicOrbit(points=np.full((4, 3), 0.3), times=np.linspace(0.0, T, 4, endpoint=False), T_gamma=T,
                         section=Section(anchor=np.zeros(3), normal=np.array([1.0, 0.0, 0.0])), residual=0.0)


def test_linearization_period():
    assert linearization_period(ML_CENTER, 1.0, X_HAT) == pytest.approx(21.7656, rel=1e-4)
    assert linearization_period(np.eye(3), 1.0, np.ones(3)) is None


def test_resonant_omega():
    assert resonant_omega(1.0, 0.25, 21.7656) == pytest.approx(87.0624)
    assert resonant_omega(1.0, 0.25, 21.7656, eta=0.5) == pytest.approx(43.5312)


def test_find_periodic_orbit_near_equilibrium():
    orbit = find_periodic_orbit(ML_CENTER, 1.0, SEED)
    assert orbit.T_gamma == pytest.approx(21.7656, abs=0.3)
    assert orbit.residual <= 1e-7
    assert np.all(orbit.points > 0)
    assert list(orbit.to_frame().columns) == ["t", "x1", "x2", "x3"]
    # the recorded period is minimal
    assert half_period_gap(ML_CENTER, 1.0, orbit) > 1e-3


@pytest.mark.parametrize("A,seed,code", [
    ([[1.0, 2.0, 0.5], [2.0, 1.0, 0.5], [0.5, 0.5, 1.0]], [0.2, 0.2, 0.7], "det_nonpositive"),
    (ML_CENTER, [0.3, 0.0, 0.3], "seed_not_interior"),
    (ML_CENTER, X_HAT, "seed_at_equilibrium"),
])
def test_find_periodic_orbit_preconditions(A, seed, code):
    with pytest.raises(PreconditionFailed) as info:
        find_periodic_orbit(np.array(A), 1.0, seed)
    assert info.value.code == code


def test_curve_classification(standard_spec):
    # rho_hat = 0.25 for the standard season
    assert minimal_period_and_eta(standard_spec, _fake_orbit(0.25)).kind is CurveKind.FIXED_CURVE

    half = minimal_period_and_eta(standard_spec, _fake_orbit(0.5))
    assert half.kind is CurveKind.PERIODIC_ORBITS
    assert (half.p, half.q) == (1, 2)

    two_thirds = minimal_period_and_eta(standard_spec, _fake_orbit(0.375))
    assert (two_thirds.p, two_thirds.q) == (2, 3)

    dense = minimal_period_and_eta(standard_spec, _fake_orbit(0.25 / math.sqrt(2.0)))
    assert dense.kind is CurveKind.DENSE_ORBITS
    assert dense.eta == pytest.approx(math.sqrt(2.0))


def test_construct_multiplicity_preconditions():
    with pytest.raises(PreconditionFailed) as info:
        construct_multiplicity(np.array(may_leonard_matrix(1.2, 0.5)), 1.0, 0.5, 0.5, SEED)
    assert info.value.code == "zeta_nonzero"

    with pytest.raises(PreconditionFailed) as info:
        construct_multiplicity(ML_CENTER, 1.0, 1.0, 0.5, SEED)
    assert info.value.code == "r_nonpositive"


def test_period_survey_records_failures():
    survey = period_survey(ML_CENTER, 1.0, [SEED, X_HAT])
    assert list(survey.columns) == ["s1", "s2", "s3", "T_gamma", "residual", "error"]
    assert survey["error"].tolist() == [None, "seed_at_equilibrium"]
    assert survey["T_gamma"].iloc[0] == pytest.approx(21.7656, abs=0.3)


@pytest.fixture(scope="module")
def resonant():
    return construct_multiplicity(ML_CENTER, 1.0, 0.5, 0.5, SEED)


@pytest.mark.slow
def test_multiplicity_and_resonance(resonant):
    spec, orbit = resonant
    assert spec.omega == pytest.approx(87.06, abs=1.5)
    assert derive_constants(spec).rho_hat == pytest.approx(orbit.T_gamma, rel=1e-12)
    assert minimal_period_and_eta(spec, orbit).kind is CurveKind.FIXED_CURVE

    summary = multiplicity_summary(spec, orbit)
    assert summary["fixed_curve_residual"] <= 1e-5
    assert summary["max_pairwise_distance"] >= 0.01

    # detuning destroys the curve but not the equilibrium
    detuned = spec.with_omega(1.01 * spec.omega)
    assert verify_fixed_curve(detuned, orbit) >= 1e-3
    assert verify_fixed_curve(detuned, X_HAT[None, :], n_samples=1) <= 1e-9

    # half the season length: period-2 points
    sub = subharmonic_residuals(spec.with_omega(spec.omega / 2.0), orbit, q=2)
    assert sub["max_return_residual"] <= 1e-6
    assert sub["min_single_step_residual"] >= 1e-3


@pytest.mark.slow
def test_resonant_map_has_a_continuum_of_positive_fixed_points(resonant):
    spec, orbit = resonant
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonhyperbolicWarning)
        records = positive_fixed_points(spec, orbit=orbit)
    assert len(records) >= 2
    locations = np.array([rec.location for rec in records])
    assert np.all(locations > 0)
    spread = np.linalg.norm(locations[:, None, :] - locations[None, :, :], axis=2).max()
    assert spread >= 0.01


def test_eta_is_the_same_from_every_point_of_the_orbit(ml_center):
    orbit = find_periodic_orbit(ML_CENTER, 1.0, SEED)
    base = minimal_period_and_eta(ml_center, orbit).eta
    for i in (0, 85, 170):
        again = find_periodic_orbit(ML_CENTER, 1.0, orbit.points[i])
        assert minimal_period_and_eta(ml_center, again).eta == pytest.approx(base, abs=1e-8)


def test_scaled_periodic_orbit_is_invariant_under_the_map(ml_center):
    orbit = find_periodic_orbit(ML_CENTER, 1.0, SEED)
    assert invariant_set_residual(ml_center, orbit.points) <= 1e-5
    # off the carrying simplex the image is pulled back towards it
    assert invariant_set_residual(ml_center, 1.05 * orbit.points) > 1e-3
