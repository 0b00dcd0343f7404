# slv_core/poincare.py

"""
The Poincare map P(x) = Phi_{phi*omega}(l*x), its Jacobian, its iterates and the
conjugacy P^k(x) = rho_star * Phi_{k*rho_hat}(x / rho_star).

Fate constants live here and are shared with the portrait sampler (slv_core.simplex).
"""

from __future__ import annotations

import logging
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from slv_core.errors import PreconditionFailed
from slv_core.flow import DEFAULT_TOL, flow_autonomous, flow_batch
from slv_core.model import ModelSpec, derive_constants

logger = logging.getLogger(__name__)

# ---- fate thresholds ----
CONVERGED_TOL = 1e-9
BOUNDARY_MIN_COORD = 1e-3
BOUNDARY_MIN_NORM = 0.05
CURVE_WINDOW = 50
CURVE_TOL = 1e-4
CURVE_MIN_REFERENCE = 100
CURVE_MAX_GAP = np.pi / 4


class Fate(str, Enum):
    CONVERGED = "converged"
    NEAR_BOUNDARY_CYCLE = "near_boundary_cycle"
    ON_INVARIANT_CURVE = "on_invariant_curve"
    UNDECIDED = "undecided"


class OrbitTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    k: int
    fate: Fate
    limit: Optional[np.ndarray] = None
    curve_residual: Optional[float] = None

    @property
    def min_coordinate(self) -> float:
        return float(self.points[-min(CURVE_WINDOW, len(self.points)):].min())


def _as_state(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(3)


def poincare_map(spec: ModelSpec, x, tol: float = DEFAULT_TOL) -> np.ndarray:
    consts = derive_constants(spec)
    return flow_autonomous(spec.matrix, spec.b, consts.l * _as_state(x), spec.phi * spec.omega, tol).state


def poincare_map_batch(spec: ModelSpec, X, tol: float = DEFAULT_TOL) -> np.ndarray:
    consts = derive_constants(spec)
    return flow_batch(spec.matrix, spec.b, consts.l * np.atleast_2d(X), spec.phi * spec.omega, tol)


def map_with_jacobian(spec: ModelSpec, x, tol: float = DEFAULT_TOL):
    """(P(x), DP(x)); no interiority requirement, boundary fixed points use it too."""
    consts = derive_constants(spec)
    res = flow_autonomous(spec.matrix, spec.b, consts.l * _as_state(x), spec.phi * spec.omega, tol,
                          with_variational=True)
    return res.state, res.jacobian * consts.l


def poincare_jacobian(spec: ModelSpec, x, tol: float = DEFAULT_TOL) -> np.ndarray:
    x = _as_state(x)
    if not np.all(x > 0):
        raise PreconditionFailed(f"DP requires an interior point, got {x.tolist()}", code="not_interior")
    return map_with_jacobian(spec, x, tol)[1]


def conjugacy_residual(spec: ModelSpec, x, k: int, tol: float = DEFAULT_TOL) -> float:
    """||P^k(x) - rho* Phi_{k rho_hat}(x/rho*)||_inf; the right side is one long integration."""
    if k == 0:
        return 0.0
    consts = derive_constants(spec)
    x = _as_state(x)

    left = x
    for _ in range(k):
        left = poincare_map(spec, left, tol)

    right = consts.rho_star * flow_autonomous(
        spec.matrix, spec.b, x / consts.rho_star, k * consts.rho_hat, tol
    ).state
    return float(np.max(np.abs(left - right)))


def conjugacy_max_residual(spec: ModelSpec, X0, ks: Sequence[int] = (1, 10, 50),
                           tol: float = DEFAULT_TOL) -> float:
    """conjugacy_residual over every row of X0 and every k in ks, with shared batch stepping."""
    consts = derive_constants(spec)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    X = X0.copy()
    done, worst = 0, 0.0
    for k in sorted(ks):
        for _ in range(k - done):
            X = poincare_map_batch(spec, X, tol)
        done = k
        right = consts.rho_star * flow_batch(spec.matrix, spec.b, X0 / consts.rho_star, k * consts.rho_hat, tol)
        worst = max(worst, float(np.max(np.abs(X - right))))
    return worst


# ---------- fate detection ----------
def _interior_center(spec: ModelSpec) -> Optional[np.ndarray]:
    """rho* x_hat, the centre the interior invariant curves wind around; None without x_hat."""
    try:
        x_hat = np.linalg.solve(spec.matrix, np.full(3, spec.b))
    except np.linalg.LinAlgError:
        return None
    if not np.all(x_hat > 0):
        return None
    return derive_constants(spec).rho_star * x_hat


def closed_curve_residual(history, window: int = CURVE_WINDOW, center=None) -> float:
    """
    Largest distance from the last `window` iterates to the closed curve traced by the
    iterates before them.

    The reference is the later half of the earlier history (the transient is dropped),
    ordered by polar angle about `center` in its best-fit plane; the curve is the
    closed polyline through it in that order. If the reference leaves an angular hole
    wider than CURVE_MAX_GAP the orbit has not been round once yet, and only a finite
    cycle counts: every recent iterate must land on an earlier one. inf when the
    history is too short.
    """
    H = np.asarray(history, dtype=float)
    if len(H) < window + 2 * CURVE_MIN_REFERENCE:
        return float("inf")
    recent, earlier = H[-window:], H[:-window]
    reference = earlier[len(earlier) // 2:]

    middle = reference.mean(axis=0)
    origin = middle if center is None else np.asarray(center, dtype=float)
    _, _, Vt = np.linalg.svd(reference - middle, full_matrices=False)
    rel = reference - origin
    theta = np.arctan2(rel @ Vt[1], rel @ Vt[0])
    order = np.argsort(theta)
    sorted_theta = theta[order]
    gaps = np.diff(np.append(sorted_theta, sorted_theta[0] + 2.0 * np.pi))

    if gaps.max() > CURVE_MAX_GAP:
        nearest = np.linalg.norm(recent[:, None, :] - reference[None, :, :], axis=2).min(axis=1)
        return float(nearest.max())
    nodes = reference[order]
    return max(_polyline_distance(y, nodes, closed=True) for y in recent)


def _near_boundary(window: np.ndarray) -> bool:
    mins = window.min(axis=1)
    norms = np.linalg.norm(window, axis=1)
    return bool(np.any((mins < BOUNDARY_MIN_COORD) & (norms > BOUNDARY_MIN_NORM)))


def _final_fate(history: np.ndarray, center: Optional[np.ndarray] = None):
    if _near_boundary(history[-CURVE_WINDOW:]):
        return Fate.NEAR_BOUNDARY_CYCLE, None
    residual = closed_curve_residual(history, CURVE_WINDOW, center)
    if residual < CURVE_TOL:
        return Fate.ON_INVARIANT_CURVE, residual
    return Fate.UNDECIDED, residual


def iterate_batch(spec: ModelSpec, X0, k: int, stop_tol: float = CONVERGED_TOL,
                  tol: float = DEFAULT_TOL) -> List[OrbitTrace]:
    """
    Iterate P on every row of X0 for at most k steps, in one shared integration per step.

    - ConvergedTo is absorbing: a trace stops once ||P(x) - x||_inf < stop_tol
    - traces still running after k steps are judged on their last CURVE_WINDOW iterates,
      the invariant-curve test against the orbit traced before them:
      NearBoundaryCycle, then OnInvariantCurve, else Undecided
    """
    if k < 1:
        raise PreconditionFailed(f"k={k!r} must be >= 1", code="bad_iteration_count")
    X = np.array(np.atleast_2d(X0), dtype=float)
    n = X.shape[0]
    history: List[List[np.ndarray]] = [[x.copy()] for x in X]
    active = np.ones(n, dtype=bool)
    center = _interior_center(spec)
    limits: List[Optional[np.ndarray]] = [None] * n

    for step in range(k):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        images = poincare_map_batch(spec, X[idx], tol)
        for j, y in zip(idx, images):
            history[j].append(y)
            if np.max(np.abs(y - X[j])) < stop_tol:
                active[j] = False
                limits[j] = y
            X[j] = y
        if (step + 1) % 500 == 0:
            logger.debug("iterate: step %d, %d/%d traces active", step + 1, active.sum(), n)

    traces = []
    for j in range(n):
        pts = np.array(history[j])
        if limits[j] is not None:
            traces.append(OrbitTrace(points=pts, k=len(pts) - 1, fate=Fate.CONVERGED, limit=limits[j]))
            continue
        fate, residual = _final_fate(pts, center)
        traces.append(OrbitTrace(points=pts, k=len(pts) - 1, fate=fate, curve_residual=residual))
    return traces


def iterate(spec: ModelSpec, x, k: int, stop_tol: float = CONVERGED_TOL,
            tol: float = DEFAULT_TOL) -> OrbitTrace:
    return iterate_batch(spec, _as_state(x)[None, :], k, stop_tol, tol)[0]


# ---------- structural checks ----------
def _polyline_distance(point: np.ndarray, nodes: np.ndarray, closed: bool) -> float:
    if closed:
        a, b = nodes, np.roll(nodes, -1, axis=0)
    else:
        a, b = nodes[:-1], nodes[1:]
    seg = b - a
    length2 = np.einsum("ij,ij->i", seg, seg)
    s = np.clip(np.einsum("ij,ij->i", point - a, seg) / np.where(length2 > 0, length2, 1.0), 0.0, 1.0)
    proj = a + s[:, None] * seg
    return float(np.min(np.linalg.norm(point - proj, axis=1)))


def invariant_set_residual(spec: ModelSpec, samples: Sequence, closed: bool = True,
                           tol: float = DEFAULT_TOL) -> float:
    """
    For samples of a Phi-invariant set L (an equilibrium, or an ordered sampling of a
    closed orbit), the largest distance from P(rho* x), x in L, to the polyline rho* L.
    """
    consts = derive_constants(spec)
    nodes = consts.rho_star * np.atleast_2d(np.asarray(samples, dtype=float))
    images = poincare_map_batch(spec, nodes, tol)
    if len(nodes) == 1:
        return float(np.max(np.abs(images[0] - nodes[0])))
    return max(_polyline_distance(y, nodes, closed) for y in images)


def injectivity_gap(spec: ModelSpec, X, tol: float = DEFAULT_TOL) -> float:
    """Smallest pairwise distance between images of the rows of X."""
    images = np.array([poincare_map(spec, x, tol) for x in np.atleast_2d(X)])
    diff = images[:, None, :] - images[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    dist[np.diag_indices_from(dist)] = np.inf
    return float(dist.min())
