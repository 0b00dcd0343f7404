# slv_core/fixedpoints.py

"""
Fixed points of P: origin, axial q{i}, planar v{k} (in the plane x_k = 0) and positive p{j}.

What this file supports:
- autonomous_positive_equilibrium(A, b): x_hat with A x_hat = b*1, if positive
- axial / planar / positive census with residual checks
- spectrum_and_index(spec, record): eigenvalues of DP, index, stability and,
  for positive points, the exponential / eigenvalue identity checks
- theta_hat_check(spec, theta): time average identity A*theta_hat/omega = r*1
- census_frame(records): stable-schema DataFrame for CSV/JSON output

NOTE:
- every fixed point that is rho* times an equilibrium of the flow has that
  equilibrium as an eigenvector of DP with eigenvalue exp(-b*rho_hat); dropping it
  gives the stability of the point inside the carrying simplex.
"""

from __future__ import annotations

import logging
import math
import warnings
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import expm

from slv_core.errors import DegenerateMatrix, NewtonDivergence, NonhyperbolicWarning, PreconditionFailed
from slv_core.flow import DEFAULT_TOL, flow_integral, lv_jacobian, lv_vector_field
from slv_core.model import ModelSpec, average_growth_rate, derive_constants, det_threshold, zeta_of
from slv_core.poincare import map_with_jacobian, poincare_map

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
NEWTON_MAX_ITER = 50
NEWTON_STEP_TOL = 1e-12
NEWTON_RESIDUAL_FLOOR = 1e-14
NEWTON_MIN_DAMPING = 1.0 / 1024
NEWTON_RCOND = 1e-10
DISTINCT_TOL = 1e-6
NONHYPERBOLIC_BAND = 1e-7
EQUILIBRIUM_TOL = 1e-8


class FixedPointKind(str, Enum):
    ORIGIN = "origin"
    AXIAL = "axial"
    PLANAR = "planar"
    POSITIVE = "positive"


KIND_ORDER = {FixedPointKind.ORIGIN: 0, FixedPointKind.AXIAL: 1, FixedPointKind.PLANAR: 2,
              FixedPointKind.POSITIVE: 3}


class Stability(str, Enum):
    ATTRACTOR = "attractor"
    REPELLER = "repeller"
    SADDLE = "saddle"
    NONHYPERBOLIC = "nonhyperbolic"


class FixedPointRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: FixedPointKind
    label: str
    location: np.ndarray
    residual: float
    axis: Optional[int] = None  # 1-based species for axial, zero coordinate for planar
    eigenvalues: Optional[np.ndarray] = None
    index: Optional[int] = None
    stability: Optional[Stability] = None
    stability_on_simplex: Optional[Stability] = None
    newton_iterations: int = 0
    checks: Dict[str, float] = Field(default_factory=dict)

    @property
    def n_unstable(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) > 1.0)) if self.eigenvalues is not None else -1

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "label": self.label,
            "location": self.location.tolist(),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues]
            if self.eigenvalues is not None else None,
            "index": self.index,
            "stability": self.stability.value if self.stability else None,
            "stability_on_simplex": self.stability_on_simplex.value if self.stability_on_simplex else None,
            "residual": self.residual,
            "newton_iterations": self.newton_iterations,
            "checks": self.checks,
        }


def autonomous_positive_equilibrium(A, b: float) -> Optional[np.ndarray]:
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) <= det_threshold(A):
        raise DegenerateMatrix("A is singular, the interior equilibrium is not isolated")
    x = np.linalg.solve(A, np.full(3, float(b)))
    return x if np.all(x > 0) else None


def fixed_point_residual(spec: ModelSpec, x, tol: float = DEFAULT_TOL) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(poincare_map(spec, x, tol) - x)))


def _newton(spec: ModelSpec, guess: np.ndarray, coords: Sequence[int], tol: float,
            accept_tol: float):
    """
    Damped Newton on P(x)[coords] - x[coords] with the other coordinates pinned.

    lstsq with a relative rcond drops the near-null directions that appear on
    curves of fixed points. Returns (x, residual on coords, iterations).
    """
    coords = list(coords)
    x = np.array(guess, dtype=float)
    image, jac = map_with_jacobian(spec, x, tol)
    F = image[coords] - x[coords]
    norm_F = float(np.max(np.abs(F)))
    iterations = 0

    while iterations < NEWTON_MAX_ITER and norm_F > NEWTON_RESIDUAL_FLOOR:
        J = jac[np.ix_(coords, coords)] - np.eye(len(coords))
        step, *_ = np.linalg.lstsq(J, -F, rcond=NEWTON_RCOND)

        lam = 1.0
        accepted = False
        while lam >= NEWTON_MIN_DAMPING:
            trial = x.copy()
            trial[coords] += lam * step
            if np.all(trial[coords] > 0):
                t_image, t_jac = map_with_jacobian(spec, trial, tol)
                t_F = t_image[coords] - trial[coords]
                if np.max(np.abs(t_F)) < norm_F:
                    accepted = True
                    break
            lam /= 2.0

        if not accepted:
            if norm_F <= accept_tol:
                break
            raise NewtonDivergence(f"no damped step reduces the residual {norm_F:.3e}",
                                   iterations=iterations, residual=norm_F)

        x, jac, F = trial, t_jac, t_F
        norm_F = float(np.max(np.abs(F)))
        iterations += 1
        logger.debug("newton it=%d residual=%.3e damping=%g", iterations, norm_F, lam)
        if np.max(np.abs(lam * step)) < NEWTON_STEP_TOL:
            break

    return x, norm_F, iterations


# ---------- spectra ----------
def _classify_moduli(moduli: np.ndarray) -> Stability:
    if np.any(np.abs(moduli - 1.0) < NONHYPERBOLIC_BAND):
        return Stability.NONHYPERBOLIC
    n_out = int(np.sum(moduli > 1.0))
    if n_out == 0:
        return Stability.ATTRACTOR
    if n_out == len(moduli):
        return Stability.REPELLER
    return Stability.SADDLE


def _positive_checks(spec: ModelSpec, location: np.ndarray, jac: np.ndarray) -> Dict[str, float]:
    consts = derive_constants(spec)
    A = spec.matrix
    b = spec.b
    x_star = location / consts.rho_star
    perron = math.exp(-b * consts.rho_hat)

    evals, evecs = np.linalg.eig(jac)
    i = int(np.argmin(np.abs(evals - perron)))
    v = np.real(evecs[:, i])
    if v.sum() < 0:
        v = -v
    cosine = float(v @ x_star / (np.linalg.norm(v) * np.linalg.norm(x_star)))
    smallest = evals[int(np.argmin(np.abs(evals)))]

    checks = {
        "perron_eigenvalue": perron,
        "perron_error": float(abs(evals[i] - perron)),
        "perron_angle": float(math.acos(min(1.0, max(-1.0, cosine)))),
        "smallest_modulus_real": float(abs(smallest.imag) <= 1e-12 and 0.0 < smallest.real < 1.0),
    }

    # the remaining identities hold at rho* times an equilibrium of the flow
    if np.max(np.abs(lv_vector_field(A, b, x_star))) > EQUILIBRIUM_TOL * max(1.0, np.max(x_star)):
        return checks

    Df = lv_jacobian(A, b, x_star)
    df_evals = np.linalg.eigvals(Df)
    pair = np.delete(df_evals, int(np.argmin(np.abs(df_evals + b))))
    det = float(np.linalg.det(A))
    target = b * zeta_of(A) / det
    checks.update({
        "pair_sum": float(pair.sum().real),
        "pair_sum_target": target,
        "pair_sum_error": float(abs(pair.sum().real - target) / max(abs(target), b)),
        "pair_product_sign": float(np.sign((pair[0] * pair[1]).real * det)),
        "expm_residual": float(np.linalg.norm(jac - expm(Df * consts.rho_hat), np.inf)),
    })
    return checks


def spectrum_and_index(spec: ModelSpec, record: FixedPointRecord,
                       tol: float = DEFAULT_TOL) -> FixedPointRecord:
    consts = derive_constants(spec)
    _, jac = map_with_jacobian(spec, record.location, tol)
    evals = np.linalg.eigvals(jac)
    moduli = np.abs(evals)

    stability = _classify_moduli(moduli)
    if stability is Stability.NONHYPERBOLIC:
        warnings.warn(f"fixed point {record.label} has an eigenvalue of modulus ~1: {evals}",
                      NonhyperbolicWarning, stacklevel=2)

    on_simplex = None
    if record.kind is not FixedPointKind.ORIGIN:
        perron = math.exp(-spec.b * consts.rho_hat)
        rest = np.delete(moduli, int(np.argmin(np.abs(evals - perron))))
        on_simplex = _classify_moduli(rest)

    checks = dict(record.checks)
    if record.kind is FixedPointKind.POSITIVE:
        checks.update(_positive_checks(spec, record.location, jac))

    return record.model_copy(update={
        "eigenvalues": evals,
        "index": 1 if int(np.sum(moduli > 1.0)) % 2 == 0 else -1,
        "stability": stability,
        "stability_on_simplex": on_simplex,
        "checks": checks,
    })


# ---------- census ----------
def origin_fixed_point(spec: ModelSpec, tol: float = DEFAULT_TOL) -> FixedPointRecord:
    rec = FixedPointRecord(kind=FixedPointKind.ORIGIN, label="o", location=np.zeros(3), residual=0.0)
    return spectrum_and_index(spec, rec, tol)


def axial_fixed_points(spec: ModelSpec, tol: float = DEFAULT_TOL) -> List[FixedPointRecord]:
    consts = derive_constants(spec)
    A = spec.matrix
    out = []
    for i in range(3):
        loc = np.zeros(3)
        loc[i] = spec.b / A[i, i] * consts.rho_star
        residual = fixed_point_residual(spec, loc, tol)
        if residual > RESIDUAL_TOL:
            logger.warning("axial point q%d residual %.3e above %.0e", i + 1, residual, RESIDUAL_TOL)
        rec = FixedPointRecord(kind=FixedPointKind.AXIAL, label=f"q{i + 1}", location=loc,
                               residual=residual, axis=i + 1)
        out.append(spectrum_and_index(spec, rec, tol))
    return out


def planar_fixed_points(spec: ModelSpec, tol: float = DEFAULT_TOL,
                        residual_tol: float = RESIDUAL_TOL) -> List[FixedPointRecord]:
    consts = derive_constants(spec)
    A = spec.matrix
    out = []
    for k in range(3):
        coords = [i for i in range(3) if i != k]
        sub = A[np.ix_(coords, coords)]
        if abs(np.linalg.det(sub)) <= det_threshold(sub):
            logger.info("plane x%d=0: restricted matrix singular, skipped", k + 1)
            continue
        x_sub = np.linalg.solve(sub, np.full(2, spec.b))
        if not np.all(x_sub > 0):
            continue

        guess = np.zeros(3)
        guess[coords] = consts.rho_star * x_sub
        try:
            loc, _, iterations = _newton(spec, guess, coords, tol, residual_tol)
        except NewtonDivergence as exc:
            logger.warning("plane x%d=0: %s", k + 1, exc.detail)
            continue

        residual = fixed_point_residual(spec, loc, tol)
        if residual > residual_tol or not np.all(loc[coords] > 0):
            logger.warning("plane x%d=0: rejected candidate %s (residual %.3e)", k + 1, loc, residual)
            continue
        rec = FixedPointRecord(kind=FixedPointKind.PLANAR, label=f"v{k + 1}", location=loc,
                               residual=residual, axis=k + 1, newton_iterations=iterations)
        out.append(spectrum_and_index(spec, rec, tol))
    return out


def positive_fixed_points(spec: ModelSpec, orbit=None, n_seeds: int = 8,
                          tol: float = DEFAULT_TOL,
                          residual_tol: float = RESIDUAL_TOL) -> List[FixedPointRecord]:
    """
    rho* x_hat whenever x_hat exists (no Newton needed), plus fixed points refined by
    3-D Newton from n_seeds points of a detected periodic orbit scaled by rho*.
    """
    consts = derive_constants(spec)
    x_hat = autonomous_positive_equilibrium(spec.matrix, spec.b)
    if x_hat is None:
        return []

    p = consts.rho_star * x_hat
    found = [(p, fixed_point_residual(spec, p, tol), 0)]

    if orbit is not None:
        points = np.asarray(orbit.points)
        idx = np.linspace(0, len(points), n_seeds, endpoint=False).astype(int)
        for seed in consts.rho_star * points[idx]:
            try:
                loc, _, iterations = _newton(spec, seed, [0, 1, 2], tol, residual_tol)
            except NewtonDivergence as exc:
                logger.info("orbit seed %s: %s", seed, exc.detail)
                continue
            residual = fixed_point_residual(spec, loc, tol)
            if residual > residual_tol or not np.all(loc > 0):
                continue
            if any(np.linalg.norm(loc - q) <= DISTINCT_TOL for q, _, _ in found):
                continue
            found.append((loc, residual, iterations))

    found.sort(key=lambda item: tuple(item[0]))
    out = []
    for j, (loc, residual, iterations) in enumerate(found):
        rec = FixedPointRecord(kind=FixedPointKind.POSITIVE, label=f"p{j + 1}", location=loc,
                               residual=residual, newton_iterations=iterations)
        out.append(spectrum_and_index(spec, rec, tol))
    logger.info("positive fixed points: %d", len(out))
    return out


def fixed_point_census(spec: ModelSpec, orbit=None, tol: float = DEFAULT_TOL,
                       residual_tol: float = RESIDUAL_TOL) -> List[FixedPointRecord]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonhyperbolicWarning)
        records = [origin_fixed_point(spec, tol)]
        records += axial_fixed_points(spec, tol)
        records += planar_fixed_points(spec, tol, residual_tol)
    records += positive_fixed_points(spec, orbit=orbit, tol=tol, residual_tol=residual_tol)
    records.sort(key=lambda rec: (KIND_ORDER[rec.kind], tuple(rec.location)))
    return records


def nearest_label(point, records: Sequence[FixedPointRecord], radius: float = 1e-5) -> Optional[str]:
    point = np.asarray(point, dtype=float)
    best = None
    best_dist = radius
    for rec in records:
        dist = float(np.max(np.abs(rec.location - point)))
        if dist <= best_dist:
            best, best_dist = rec.label, dist
    return best


def census_frame(records: Sequence[FixedPointRecord]) -> pd.DataFrame:
    expected_cols = ["label", "kind", "x1", "x2", "x3", "residual", "index", "stability",
                     "stability_on_simplex", "n_unstable", "newton_iterations",
                     "eig1_re", "eig1_im", "eig2_re", "eig2_im", "eig3_re", "eig3_im"]
    rows = []
    for rec in records:
        row = {
            "label": rec.label,
            "kind": rec.kind.value,
            "x1": rec.location[0], "x2": rec.location[1], "x3": rec.location[2],
            "residual": rec.residual,
            "index": rec.index,
            "stability": rec.stability.value if rec.stability else None,
            "stability_on_simplex": rec.stability_on_simplex.value if rec.stability_on_simplex else None,
            "n_unstable": rec.n_unstable,
            "newton_iterations": rec.newton_iterations,
        }
        evals = rec.eigenvalues if rec.eigenvalues is not None else np.full(3, np.nan, dtype=complex)
        for i, z in enumerate(evals):
            row[f"eig{i + 1}_re"] = float(z.real)
            row[f"eig{i + 1}_im"] = float(z.imag)
        rows.append(row)
    return pd.DataFrame(rows, columns=expected_cols)


def theta_hat_check(spec: ModelSpec, theta, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Time average of the good-season trajectory through a positive fixed point theta:
    returns A*theta_hat/omega - r*1 with theta_hat = integral of Phi_t(l*theta) over [0, phi*omega].
    """
    theta = np.asarray(theta, dtype=float).reshape(3)
    if not np.all(theta > 0):
        raise PreconditionFailed("theta must be strictly positive", code="not_interior")
    residual = fixed_point_residual(spec, theta, tol)
    if residual > 1e-8:
        raise PreconditionFailed(f"theta is not a fixed point of P (residual {residual:.3e})",
                                 code="not_fixed_point")

    consts = derive_constants(spec)
    _, theta_hat = flow_integral(spec.matrix, spec.b, consts.l * theta, spec.phi * spec.omega, tol)
    r = average_growth_rate(spec.b, spec.mu, spec.phi)
    return spec.matrix @ theta_hat / spec.omega - r
