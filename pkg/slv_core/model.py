# slv_core/model.py

"""
Parameter domain of the equal-rate seasonal LV system and its closed-form constants.

What this file supports:
- ModelSpec: interaction matrix A plus (b, mu, phi, omega); the single source of truth
- derive_constants(spec): r, l, rho_star, rho_hat (cached, specs are frozen/hashable)
- validate(spec): diagnostic report, never raises
- require_admissible(spec): raising variant used by the CLI before any numerics

NOTE:
- construction checks shape, field domains and the sign of r (RInvalid); positivity of A
  and the nonsingularity of A are reported by validate() and enforced by
  derive_constants() / require_admissible().
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from slv_core.errors import DegenerateMatrix, PositivityViolation, RInvalid

logger = logging.getLogger(__name__)

DET_REL_EPS = 1e-9

Row = Tuple[float, float, float]


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    A: Tuple[Row, Row, Row]
    b: float = Field(gt=0)
    mu: float = Field(gt=0)
    phi: float = Field(gt=0, le=1)
    omega: float = Field(gt=0)

    @field_validator("A")
    @classmethod
    def _finite_entries(cls, value):
        if not all(math.isfinite(a) for row in value for a in row):
            raise ValueError("A must have finite entries")
        return value

    @model_validator(mode="after")
    def _positive_average_growth(self) -> "ModelSpec":
        # RInvalid is not a ValueError, so pydantic lets it through unwrapped
        r = average_growth_rate(self.b, self.mu, self.phi)
        if r <= 0:
            raise RInvalid(f"r = b*phi - mu*(1-phi) = {r!r} must be > 0", r=r)
        return self

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.A, dtype=float)

    def with_omega(self, omega: float) -> "ModelSpec":
        return self.model_copy(update={"omega": float(omega)})

    def to_json_dict(self) -> dict:
        return {"A": [list(row) for row in self.A], "b": self.b, "mu": self.mu,
                "phi": self.phi, "omega": self.omega}


class DerivedConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: float
    l: float
    rho_star: float
    rho_hat: float


class Diagnostics(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: float
    r_positive: bool
    det_A: float
    det_sign: int
    eps_det: float
    nonsingular: bool
    positivity_violations: List[str]
    admissible: bool
    messages: List[str]


def average_growth_rate(b: float, mu: float, phi: float) -> float:
    """r = b*phi - mu*(1 - phi); independent of omega."""
    return b * phi - mu * (1.0 - phi)


def inf_norm(A) -> float:
    return float(np.abs(np.asarray(A, dtype=float)).sum(axis=1).max())


def det_threshold(A) -> float:
    return DET_REL_EPS * inf_norm(A) ** 3


@lru_cache(maxsize=256)
def derive_constants(spec: ModelSpec) -> DerivedConstants:
    r = average_growth_rate(spec.b, spec.mu, spec.phi)
    if r <= 0:
        raise RInvalid(f"r = b*phi - mu*(1-phi) = {r!r} must be > 0", r=r)

    A = spec.matrix
    det = float(np.linalg.det(A))
    if abs(det) <= det_threshold(A):
        raise DegenerateMatrix(f"|det A| = {abs(det)!r} <= {det_threshold(A)!r}", det_A=det)

    good = spec.b * spec.phi * spec.omega
    bad = spec.mu * (1.0 - spec.phi) * spec.omega

    # expm1 keeps rho_star accurate when both exponents are tiny
    rho_star = math.expm1(bad - good) / math.expm1(-good)
    out = DerivedConstants(
        r=r,
        l=math.exp(-bad),
        rho_star=rho_star,
        rho_hat=r * spec.omega / spec.b,
    )
    logger.debug("derived constants %s for %s", out, spec)
    return out


def validate(spec: ModelSpec) -> Diagnostics:
    A = spec.matrix
    r = average_growth_rate(spec.b, spec.mu, spec.phi)
    det = float(np.linalg.det(A))
    eps = det_threshold(A)

    violations = [f"a{i + 1}{j + 1}" for i in range(3) for j in range(3) if not A[i, j] > 0]

    messages = []
    if r <= 0:
        messages.append(f"average growth rate r={r:.6g} is not positive")
    if abs(det) <= eps:
        messages.append(f"det A={det:.6g} is within {eps:.3g} of zero")
    if violations:
        messages.append("non-positive interaction coefficients: " + ", ".join(violations))

    return Diagnostics(
        r=r,
        r_positive=r > 0,
        det_A=det,
        det_sign=int(np.sign(det)) if abs(det) > eps else 0,
        eps_det=eps,
        nonsingular=abs(det) > eps,
        positivity_violations=violations,
        admissible=not messages,
        messages=messages,
    )


def require_admissible(spec: ModelSpec) -> DerivedConstants:
    diag = validate(spec)
    if diag.positivity_violations:
        raise PositivityViolation("; ".join(diag.messages), entries=diag.positivity_violations)
    return derive_constants(spec)


# ---------- algebraic helpers shared by fixedpoints and classify ----------
def cyclic_alpha_beta(A):
    """(alpha_i, beta_i), alpha_i = a_{i+1,i+1} - a_{i,i+1}, beta_i = a_{i,i-1} - a_{i-1,i-1}, indices mod 3."""
    A = np.asarray(A, dtype=float)
    alpha = [A[(i + 1) % 3, (i + 1) % 3] - A[i, (i + 1) % 3] for i in range(3)]
    beta = [A[i, (i - 1) % 3] - A[(i - 1) % 3, (i - 1) % 3] for i in range(3)]
    return alpha, beta


def zeta_of(A) -> float:
    alpha, beta = cyclic_alpha_beta(A)
    return float(np.prod(beta) - np.prod(alpha))
