# slv_core/flow.py

"""
Autonomous LV flow Phi_t, the seasonal solution Psi and the logistic pieces.

Everything numerical goes through scipy.integrate.solve_ivp with the RK45
(Dormand-Prince 5(4)) pair. The bad season is never integrated: it is the exact
decay x * exp(-mu * dt).

Key behavior:
- states must be nonnegative on entry; coordinates in (-NEG_CLAMP, 0) on exit are
  clamped to 0, anything more negative raises NegativeState
- atol follows the smallest positive coordinate so near-extinct species keep
  relative accuracy (the resonant constructions push l down to ~1e-10)
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy.integrate import quad, solve_ivp

from slv_core.errors import NegativeState, PreconditionFailed, StepFailure
from slv_core.model import ModelSpec, derive_constants

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_METHOD = "RK45"
NEG_CLAMP = 1e-12
QUAD_TOL = 1e-10
MIN_RTOL = 100 * np.finfo(float).eps


class FlowResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: np.ndarray
    jacobian: Optional[np.ndarray] = None
    t: float


def lv_vector_field(A, b: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * (b - np.asarray(A, dtype=float) @ x)


def lv_jacobian(A, b: float, x) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.diag(b - A @ x) - x[:, None] * A


def logistic_solution(b: float, rho0: float, t: float) -> float:
    """rho(t) of rho' = b*rho*(1 - rho); written so that large b*t cannot overflow."""
    if rho0 < 0:
        raise PreconditionFailed(f"rho0={rho0!r} must be >= 0", code="negative_state")
    if rho0 == 0.0:
        return 0.0
    return rho0 / (rho0 + (1.0 - rho0) * math.exp(-b * t))


def seasonal_logistic_map(spec: ModelSpec, y: float) -> float:
    """M(y) = rho(phi*omega, l*y): one season of the scalar problem on an axis."""
    consts = derive_constants(spec)
    return logistic_solution(spec.b, consts.l * y, spec.phi * spec.omega)


def rho_hat_by_quadrature(spec: ModelSpec) -> float:
    consts = derive_constants(spec)
    start = consts.l * consts.rho_star
    value, _ = quad(
        lambda s: logistic_solution(spec.b, start, s),
        0.0,
        spec.phi * spec.omega,
        epsabs=QUAD_TOL * 1e-2,
        epsrel=QUAD_TOL,
        limit=200,
    )
    return float(value)


# ---------- integration core ----------
def _check_states(X: np.ndarray) -> None:
    if not np.all(np.isfinite(X)):
        raise PreconditionFailed("state has non-finite coordinates", code="invalid_state")
    if np.any(X < 0):
        raise PreconditionFailed(f"state must be nonnegative, got min {X.min()!r}", code="negative_state")


def _clamp(X: np.ndarray, t_reached: float) -> np.ndarray:
    X = np.array(X, dtype=float)
    if np.any(X < -NEG_CLAMP):
        raise NegativeState(f"coordinate {X.min()!r} below -{NEG_CLAMP}", t_reached=t_reached)
    X[X < 0] = 0.0
    return X


def _state_atol(X: np.ndarray, tol: float) -> np.ndarray:
    """Per-point absolute tolerance, shape like X (n, 3)."""
    positive = np.where(X > 0, X, np.inf).min(axis=1)
    scale = np.minimum(1.0, np.where(np.isfinite(positive), positive, 1.0))
    return np.repeat(tol * scale, X.shape[1]).reshape(X.shape)


def _variational_rhs(A: np.ndarray, b: float) -> Callable:
    def rhs(_t, y):
        x = y[:3]
        W = y[3:].reshape(3, 3)
        dx = x * (b - A @ x)
        dW = lv_jacobian(A, b, x) @ W
        return np.concatenate([dx, dW.ravel()])

    return rhs


def _batch_rhs(A: np.ndarray, b: float) -> Callable:
    def rhs(_t, y):
        X = y.reshape(-1, 3)
        return (X * (b - X @ A.T)).ravel()

    return rhs


def _integrate(fun, y0, t_end, tol, atol, method=DEFAULT_METHOD, **kwargs):
    sol = solve_ivp(fun, (0.0, float(t_end)), y0, method=method, rtol=tol, atol=atol, **kwargs)
    if sol.status == -1:
        t_reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise StepFailure(f"{sol.message} (t reached {t_reached!r})", t_reached=t_reached)
    return sol


def solve_autonomous(A, b: float, x0, t_end: float, tol: float = DEFAULT_TOL, **kwargs):
    """
    Raw solve_ivp result of x' = f(x) from x0 over [0, t_end].

    Extra keyword arguments (events, t_eval, dense_output) go straight to solve_ivp.
    Used by the orbit module for section crossings; returned states are not clamped.
    """
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    _check_states(x0[None, :])
    atol = _state_atol(x0[None, :], tol)[0]
    return _integrate(_batch_rhs(A, b), x0, t_end, tol, atol, **kwargs)


def flow_autonomous(A, b: float, x0, t: float, tol: float = DEFAULT_TOL,
                    with_variational: bool = False) -> FlowResult:
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(3)
    _check_states(x0[None, :])
    if t < 0:
        raise PreconditionFailed(f"t={t!r} must be >= 0", code="negative_time")

    if t == 0:
        return FlowResult(state=x0.copy(), jacobian=np.eye(3) if with_variational else None, t=0.0)

    x_atol = _state_atol(x0[None, :], tol)[0]
    if with_variational:
        y0 = np.concatenate([x0, np.eye(3).ravel()])
        atol = np.concatenate([x_atol, np.full(9, tol)])
        sol = _integrate(_variational_rhs(A, b), y0, t, tol, atol)
        y = sol.y[:, -1]
        return FlowResult(state=_clamp(y[:3], t), jacobian=y[3:].reshape(3, 3), t=float(t))

    sol = _integrate(_batch_rhs(A, b), x0, t, tol, x_atol)
    return FlowResult(state=_clamp(sol.y[:, -1], t), t=float(t))


def flow_batch(A, b: float, X0, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Phi_t applied to every row of X0 in a single integration.

    solve_ivp bounds the RMS error over all 3n components, not per row; rtol and atol
    are divided by sqrt(n) so each row keeps the bound a single flow_autonomous gets.
    """
    A = np.asarray(A, dtype=float)
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    _check_states(X0)
    if t == 0 or X0.shape[0] == 0:
        return X0.copy()
    shrink = 1.0 / math.sqrt(X0.shape[0])
    rtol = max(tol * shrink, MIN_RTOL)
    sol = _integrate(_batch_rhs(A, b), X0.ravel(), t, rtol, _state_atol(X0, tol).ravel() * shrink)
    return _clamp(sol.y[:, -1].reshape(X0.shape), t)


def flow_integral(A, b: float, x0, t: float, tol: float = DEFAULT_TOL):
    """Returns (Phi_t(x0), integral of Phi_s(x0) ds over [0, t])."""
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(3)
    _check_states(x0[None, :])
    field = _batch_rhs(A, b)

    def rhs(_t, y):
        return np.concatenate([field(_t, y[:3]), y[:3]])

    atol = np.concatenate([_state_atol(x0[None, :], tol)[0], np.full(3, tol)])
    sol = _integrate(rhs, np.concatenate([x0, np.zeros(3)]), t, tol, atol)
    y = sol.y[:, -1]
    return _clamp(y[:3], t), y[3:].copy()


def sample_trajectory(A, b: float, x0, times: Sequence[float], tol: float = DEFAULT_TOL) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((0, 3))
    if times[-1] == 0:
        return np.repeat(np.asarray(x0, dtype=float)[None, :], times.size, axis=0)
    sol = solve_autonomous(A, b, x0, times[-1], tol, t_eval=times)
    return _clamp(sol.y.T, float(times[-1]))


# ---------- seasonal solution ----------
def seasonal_solution(spec: ModelSpec, x0, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Psi(t, x0): each season starts with the decay phase of length (1-phi)*omega,
    then runs the LV flow for phi*omega.
    """
    consts = derive_constants(spec)
    A = spec.matrix
    x = np.asarray(x0, dtype=float).reshape(3)
    _check_states(x[None, :])
    if t < 0:
        raise PreconditionFailed(f"t={t!r} must be >= 0", code="negative_time")

    bad = (1.0 - spec.phi) * spec.omega
    good = spec.phi * spec.omega
    seasons = int(t // spec.omega)
    for _ in range(seasons):
        x = flow_autonomous(A, spec.b, consts.l * x, good, tol).state

    tau = t - seasons * spec.omega
    if tau < bad:
        return x * math.exp(-spec.mu * tau)
    if tau == bad:
        return consts.l * x
    return flow_autonomous(A, spec.b, consts.l * x, tau - bad, tol).state


def seasonal_trajectory(spec: ModelSpec, x0, n_seasons: int, samples_per_season: int = 50,
                        tol: float = DEFAULT_TOL) -> pd.DataFrame:
    """
    Samples Psi over n_seasons seasons on a uniform grid (plus every season boundary).
    Returns a stable-schema frame: t, season, phase, x1, x2, x3.
    """
    consts = derive_constants(spec)
    A = spec.matrix
    x = np.asarray(x0, dtype=float).reshape(3)
    _check_states(x[None, :])

    bad = (1.0 - spec.phi) * spec.omega
    good = spec.phi * spec.omega
    local = np.linspace(0.0, spec.omega, samples_per_season, endpoint=False)
    rows = []

    for k in range(n_seasons):
        t0 = k * spec.omega
        decay_t = local[local < bad]
        for s in decay_t:
            rows.append((t0 + s, k, "bad", *(x * math.exp(-spec.mu * s))))

        start = consts.l * x
        grow_t = np.append(local[local >= bad] - bad, good)
        states = sample_trajectory(A, spec.b, start, grow_t, tol) if good > 0 else start[None, :]
        for s, y in zip(grow_t[:-1], states[:-1]):
            rows.append((t0 + bad + s, k, "good", *y))
        x = states[-1]

    rows.append((n_seasons * spec.omega, n_seasons, "bad", *x))
    out = pd.DataFrame(rows, columns=["t", "season", "phase", "x1", "x2", "x3"])
    return out.sort_values("t", kind="stable").reset_index(drop=True)
