# slv_core/orbits.py

"""
Periodic orbits of the autonomous flow and the invariant closed curves they induce for P.

Pipeline of find_periodic_orbit:
  1) skip a transient of TRANSIENT_TIME/b so the seed sits on the carrying simplex
  2) section = hyperplane through x_hat with normal f(y0), one-sided crossings only
  3) first crossing, then first return after a guard time
  4) single-shooting Newton on (point, period) with the variational Jacobian
  5) reject collapse onto x_hat, sample the closed orbit

eta = rho_hat / T_gamma decides what P does on rho* Gamma: fixed curve (integer eta),
period-q orbits (q*eta integer) or dense orbits (no rational match up to QMAX).
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from slv_core.errors import NoReturn, NotClosed, PreconditionFailed
from slv_core.fixedpoints import autonomous_positive_equilibrium
from slv_core.flow import (DEFAULT_TOL, flow_autonomous, lv_jacobian, lv_vector_field,
                           sample_trajectory, solve_autonomous)
from slv_core.model import ModelSpec, average_growth_rate, derive_constants, det_threshold, zeta_of
from slv_core.classify import zeta_threshold
from slv_core.poincare import poincare_map

logger = logging.getLogger(__name__)

TRANSIENT_TIME = 50.0
TMAX_FACTOR = 40.0
MINIMALITY_EPS = 1e-3
CLOSURE_TOL = 1e-10
ORBIT_TOL = 1e-7
SHOOTING_MAX_ITER = 20
SHOOTING_RCOND = 1e-8
N_ORBIT_POINTS = 256
COLLAPSE_TOL = 1e-6
QMAX = 64
ETA_EPS = 1e-6


class Section(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    anchor: np.ndarray
    normal: np.ndarray

    def value(self, x) -> float:
        return float(self.normal @ (np.asarray(x, dtype=float) - self.anchor))


class PeriodicOrbit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    times: np.ndarray
    T_gamma: float
    section: Section
    residual: float
    shooting_iterations: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "x1": self.points[:, 0],
            "x2": self.points[:, 1],
            "x3": self.points[:, 2],
        }, columns=["t", "x1", "x2", "x3"])

    def header(self) -> dict:
        return {
            "T_gamma": self.T_gamma,
            "residual": self.residual,
            "section_anchor": self.section.anchor.tolist(),
            "section_normal": self.section.normal.tolist(),
            "n_points": int(len(self.points)),
        }


class CurveKind(str, Enum):
    FIXED_CURVE = "fixed_curve"
    PERIODIC_ORBITS = "periodic_orbits"
    DENSE_ORBITS = "dense_orbits"
    INDETERMINATE = "indeterminate"


class CurveClass(BaseModel):
    eta: float
    kind: CurveKind
    q: Optional[int] = None
    p: Optional[int] = None
    evidence: Dict[str, float] = Field(default_factory=dict)


def linearization_period(A, b: float, x_hat) -> Optional[float]:
    """2*pi/|Im lambda| for the complex pair of Df(x_hat), None for a real spectrum."""
    imag = np.abs(np.linalg.eigvals(lv_jacobian(A, b, x_hat)).imag)
    top = float(imag.max())
    return 2.0 * math.pi / top if top > 1e-12 else None


def _next_crossing(A, b: float, x0: np.ndarray, section: Section, t_max: float, tol: float,
                   guard: float = 0.0) -> Tuple[np.ndarray, float]:
    """First upward crossing of the section after `guard`; returns (point, time)."""
    start, t0 = x0, 0.0
    if guard > 0:
        start, t0 = flow_autonomous(A, b, x0, guard, tol).state, guard

    def event(_t, y):
        return section.value(y)

    event.terminal = True
    event.direction = 1.0

    sol = solve_autonomous(A, b, start, max(t_max - t0, 0.0), tol, events=[event])
    if sol.t_events[0].size == 0:
        raise NoReturn(f"no section crossing within t_max={t_max:.6g}", t_max=t_max)
    return np.maximum(sol.y_events[0][0], 0.0), t0 + float(sol.t_events[0][0])


def _refine_closure(A, b: float, x: np.ndarray, T: float, section: Section, tol: float):
    """
    Newton on F(x, T) = (Phi_T(x) - x, section(x)) using the bordered 4x4 Jacobian
    [[W - I, f(Phi_T x)], [n^T, 0]]. lstsq drops the direction along the orbit family.
    """
    def closure(x, T):
        res = flow_autonomous(A, b, x, T, tol, with_variational=True)
        F = np.append(res.state - x, section.value(x))
        return res, F

    res, F = closure(x, T)
    norm_F = float(np.max(np.abs(F)))
    iterations = 0
    while norm_F > CLOSURE_TOL and iterations < SHOOTING_MAX_ITER:
        J = np.zeros((4, 4))
        J[:3, :3] = res.jacobian - np.eye(3)
        J[:3, 3] = lv_vector_field(A, b, res.state)
        J[3, :3] = section.normal
        dz, *_ = np.linalg.lstsq(J, -F, rcond=SHOOTING_RCOND)

        lam = 1.0
        improved = False
        while lam >= 1.0 / 64:
            x_new, T_new = x + lam * dz[:3], T + lam * dz[3]
            if np.all(x_new > 0) and T_new > 0:
                res_new, F_new = closure(x_new, T_new)
                if np.max(np.abs(F_new)) < norm_F:
                    improved = True
                    break
            lam /= 2.0
        if not improved:
            break
        x, T, res, F = x_new, T_new, res_new, F_new
        norm_F = float(np.max(np.abs(F)))
        iterations += 1
        logger.debug("shooting it=%d closure=%.3e T=%.12g", iterations, norm_F, T)

    return x, T, float(np.max(np.abs(F[:3]))), iterations


def find_periodic_orbit(A, b: float, seed, tol: float = ORBIT_TOL,
                        n_points: int = N_ORBIT_POINTS,
                        integrator_tol: float = DEFAULT_TOL) -> PeriodicOrbit:
    A = np.asarray(A, dtype=float)
    seed = np.asarray(seed, dtype=float).reshape(3)

    if np.linalg.det(A) <= det_threshold(A):
        raise PreconditionFailed("det A must be positive", code="det_nonpositive")
    x_hat = autonomous_positive_equilibrium(A, b)
    if x_hat is None:
        raise PreconditionFailed("no positive equilibrium of the flow", code="no_positive_equilibrium")
    if not np.all(seed > 0):
        raise PreconditionFailed("seed must be interior", code="seed_not_interior")
    if np.linalg.norm(seed - x_hat) <= 1e-8 * max(1.0, np.linalg.norm(x_hat)):
        raise PreconditionFailed("seed coincides with the positive equilibrium", code="seed_at_equilibrium")

    t_lin = linearization_period(A, b, x_hat)
    t_ref = t_lin if t_lin is not None else 2.0 * math.pi * 3.0 / b
    t_max = TMAX_FACTOR * t_ref

    y0 = flow_autonomous(A, b, seed, TRANSIENT_TIME / b, integrator_tol).state
    direction = lv_vector_field(A, b, y0)
    if np.linalg.norm(direction) < 1e-14:
        raise NotClosed("transient ended on an equilibrium", point=y0.tolist())
    section = Section(anchor=x_hat, normal=direction / np.linalg.norm(direction))

    s0, _ = _next_crossing(A, b, y0, section, t_max, integrator_tol)
    _, T = _next_crossing(A, b, s0, section, t_max, integrator_tol, guard=MINIMALITY_EPS * t_ref)

    x, T, residual, iterations = _refine_closure(A, b, s0, T, section, integrator_tol)
    if np.linalg.norm(x - x_hat) < COLLAPSE_TOL:
        raise NotClosed("closure collapsed onto the positive equilibrium")
    if residual > tol:
        raise NotClosed(f"closure residual {residual:.3e} > {tol:.1e}", residual=residual)

    times = np.linspace(0.0, T, n_points, endpoint=False)
    points = sample_trajectory(A, b, x, times, integrator_tol)
    if not np.all(points > 0):
        raise NotClosed("orbit touches the boundary")

    logger.info("periodic orbit: T_gamma=%.12g closure=%.3e (%d shooting steps, t_lin=%s)",
                T, residual, iterations, t_lin)
    return PeriodicOrbit(points=points, times=times, T_gamma=float(T), section=section,
                         residual=residual, shooting_iterations=iterations)


def half_period_gap(A, b: float, orbit: PeriodicOrbit, tol: float = DEFAULT_TOL) -> float:
    """||Phi_{T/2}(x0) - x0||_inf; small values mean the recorded period is not minimal."""
    x0 = orbit.points[0]
    return float(np.max(np.abs(flow_autonomous(A, b, x0, orbit.T_gamma / 2.0, tol).state - x0)))


def _rational_match(eta: float, qmax: int, eps: float) -> Optional[Tuple[int, int]]:
    for q in range(1, qmax + 1):
        p = round(q * eta)
        if p > 0 and abs(q * eta - p) <= eps:
            frac = Fraction(p, q)
            return frac.numerator, frac.denominator
    return None


def minimal_period_and_eta(spec: ModelSpec, orbit: PeriodicOrbit, qmax: int = QMAX,
                           eps_eta: float = ETA_EPS) -> CurveClass:
    consts = derive_constants(spec)
    eta = consts.rho_hat / orbit.T_gamma
    evidence = {"rho_hat": consts.rho_hat, "T_gamma": orbit.T_gamma}

    if eta <= eps_eta:
        return CurveClass(eta=eta, kind=CurveKind.INDETERMINATE, evidence=evidence)

    match = _rational_match(eta, qmax, eps_eta)
    if match is None:
        gaps = [abs(q * eta - round(q * eta)) for q in range(1, qmax + 1)]
        evidence["closest_rational_gap"] = float(min(gaps))
        return CurveClass(eta=eta, kind=CurveKind.DENSE_ORBITS, evidence=evidence)

    p, q = match
    evidence["rational_gap"] = float(abs(q * eta - p))
    if q == 1:
        return CurveClass(eta=eta, kind=CurveKind.FIXED_CURVE, q=1, p=p, evidence=evidence)
    return CurveClass(eta=eta, kind=CurveKind.PERIODIC_ORBITS, q=q, p=p, evidence=evidence)


def resonant_omega(b: float, r: float, T_gamma: float, eta: float = 1.0) -> float:
    """Season length giving rho_hat = eta * T_gamma."""
    return eta * b / r * T_gamma


def construct_multiplicity(A, b: float, mu: float, phi: float, seed,
                           tol: float = ORBIT_TOL) -> Tuple[ModelSpec, PeriodicOrbit]:
    A = np.asarray(A, dtype=float)
    r = average_growth_rate(b, mu, phi)
    if r <= 0:
        raise PreconditionFailed(f"r={r!r} must be positive", code="r_nonpositive")
    zeta = zeta_of(A)
    if abs(zeta) > zeta_threshold(A):
        raise PreconditionFailed(f"zeta={zeta!r} is not zero", code="zeta_nonzero")
    if np.linalg.det(A) <= det_threshold(A):
        raise PreconditionFailed("det A must be positive", code="det_nonpositive")
    if autonomous_positive_equilibrium(A, b) is None:
        raise PreconditionFailed("no positive equilibrium of the flow", code="no_positive_equilibrium")

    orbit = find_periodic_orbit(A, b, seed, tol)
    omega = resonant_omega(b, r, orbit.T_gamma)
    spec = ModelSpec(A=A.tolist(), b=b, mu=mu, phi=phi, omega=omega)
    logger.info("resonant season length omega*=%.12g (T_gamma=%.12g, b/r=%.6g)", omega, orbit.T_gamma, b / r)
    return spec, orbit


def _orbit_samples(orbit_or_points, n_samples: int) -> np.ndarray:
    points = orbit_or_points.points if isinstance(orbit_or_points, PeriodicOrbit) else orbit_or_points
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = np.linspace(0, len(points), n_samples, endpoint=False).astype(int)
    return points[idx]


def verify_fixed_curve(spec: ModelSpec, orbit, n_samples: int = 8, tol: float = DEFAULT_TOL) -> float:
    """max over n_samples orbit points x of ||P(rho* x) - rho* x||_inf."""
    consts = derive_constants(spec)
    residuals = [
        np.max(np.abs(poincare_map(spec, consts.rho_star * x, tol) - consts.rho_star * x))
        for x in _orbit_samples(orbit, n_samples)
    ]
    return float(max(residuals))


def subharmonic_residuals(spec: ModelSpec, orbit, q: int, n_samples: int = 8,
                          tol: float = DEFAULT_TOL) -> Dict[str, float]:
    """Largest ||P^q x - x|| and smallest ||P x - x|| over sampled points x of rho* Gamma."""
    consts = derive_constants(spec)
    worst_q, best_1 = 0.0, math.inf
    for x in consts.rho_star * _orbit_samples(orbit, n_samples):
        y = poincare_map(spec, x, tol)
        best_1 = min(best_1, float(np.max(np.abs(y - x))))
        for _ in range(q - 1):
            y = poincare_map(spec, y, tol)
        worst_q = max(worst_q, float(np.max(np.abs(y - x))))
    return {"q": float(q), "max_return_residual": worst_q, "min_single_step_residual": best_1}


def multiplicity_summary(spec: ModelSpec, orbit, n_samples: int = 8, tol: float = DEFAULT_TOL) -> Dict[str, float]:
    """Fixed-curve residual and the largest pairwise distance among the checked points."""
    consts = derive_constants(spec)
    points = consts.rho_star * _orbit_samples(orbit, n_samples)
    diff = points[:, None, :] - points[None, :, :]
    return {
        "fixed_curve_residual": verify_fixed_curve(spec, orbit, n_samples, tol),
        "max_pairwise_distance": float(np.linalg.norm(diff, axis=2).max()),
        "n_points": float(len(points)),
    }


def period_survey(A, b: float, seeds: Sequence, tol: float = ORBIT_TOL) -> pd.DataFrame:
    """T_gamma for each seed; the spread tells whether the orbit family is isochronous."""
    rows: List[dict] = []
    for seed in seeds:
        seed = np.asarray(seed, dtype=float)
        try:
            orbit = find_periodic_orbit(A, b, seed, tol)
            rows.append({"s1": seed[0], "s2": seed[1], "s3": seed[2],
                         "T_gamma": orbit.T_gamma, "residual": orbit.residual, "error": None})
        except (NoReturn, NotClosed, PreconditionFailed) as exc:
            rows.append({"s1": seed[0], "s2": seed[1], "s3": seed[2],
                         "T_gamma": np.nan, "residual": np.nan, "error": exc.code})

    out = pd.DataFrame(rows, columns=["s1", "s2", "s3", "T_gamma", "residual", "error"])
    periods = out["T_gamma"].dropna()
    if len(periods) > 1:
        logger.info("period survey: T_gamma spread %.3e over %d orbits", periods.max() - periods.min(), len(periods))
    return out
