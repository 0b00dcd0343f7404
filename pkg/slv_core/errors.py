# slv_core/errors.py

"""
Exception hierarchy for the seasonal LV library.

Two families, mapped to CLI exit codes by slv_cli.app:
- ModelValidationError (exit 1): the input model or call precondition is bad
- NumericalFailure (exit 2): a solver did not deliver

Every error carries a short machine-readable `code` and a free-text `detail`.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class SeasonalLVError(Exception):
    code = "seasonal_lv_error"

    def __init__(self, detail: str = "", code: Optional[str] = None, **context: Any):
        self.detail = detail
        if code is not None:
            self.code = code
        self.context: Dict[str, Any] = context
        super().__init__(f"{self.code}: {detail}" if detail else self.code)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"error": self.code, "detail": self.detail}
        if self.context:
            out["context"] = self.context
        return out


# ---------- validation (exit 1) ----------
class ModelValidationError(SeasonalLVError):
    code = "validation_error"


class RInvalid(ModelValidationError):
    code = "r_nonpositive"


class DegenerateMatrix(ModelValidationError):
    code = "degenerate_matrix"


class PositivityViolation(ModelValidationError):
    code = "positivity_violation"


class PreconditionFailed(ModelValidationError):
    """Raised with `code` naming the violated condition, e.g. zeta_nonzero."""

    code = "precondition_failed"


# ---------- numerical (exit 2) ----------
class NumericalFailure(SeasonalLVError):
    code = "numerical_failure"


class StepFailure(NumericalFailure):
    code = "step_failure"


class NegativeState(NumericalFailure):
    code = "negative_state"


class NewtonDivergence(NumericalFailure):
    code = "newton_divergence"


class NoReturn(NumericalFailure):
    code = "no_return"


class NotClosed(NumericalFailure):
    code = "not_closed"


class BracketFailure(NumericalFailure):
    code = "bracket_failure"


class NonhyperbolicWarning(RuntimeWarning):
    pass
