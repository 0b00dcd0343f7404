# slv_cli/rules.py

"""
Acceptance thresholds of the `verify` suite as a rule table.

Each check group produces one or more named values; a rule says how a value is
compared with its threshold. NaN never passes.
"""

import math
from typing import Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel

Comparison = Literal["le", "ge"]


class Rule(BaseModel):
    name: str
    group: str
    threshold: float
    comparison: Comparison
    description: str


VERIFY_RULES: List[Rule] = [
    Rule(name="conjugacy_residual", group="conjugacy", threshold=1e-6, comparison="le",
         description="max ||P^k(x) - rho* Phi(k rho_hat, x/rho*)||, 20 points, k in {1, 10, 50}"),
    Rule(name="rho_hat_quadrature_error", group="rho_hat", threshold=1e-8, comparison="le",
         description="|integral of rho(s, l rho*) over the good season - r omega / b|"),
    Rule(name="jacobian_exponential_residual", group="jacobian", threshold=1e-6, comparison="le",
         description="||DP(rho* x_hat) - expm(Df(x_hat) rho_hat)||_inf"),
    Rule(name="pair_sum_error", group="eigen", threshold=1e-6, comparison="le",
         description="relative error of lambda1 + lambda2 against b zeta / det A"),
    Rule(name="pair_product_sign", group="eigen", threshold=1.0, comparison="ge",
         description="sign of lambda1 lambda2 det A"),
    Rule(name="perron_angle", group="eigen", threshold=1e-5, comparison="le",
         description="angle between the exp(-b rho_hat) eigenvector and x_hat"),
    Rule(name="index_law", group="index", threshold=1.0, comparison="ge",
         description="number of unstable eigenvalues and index of rho* x_hat agree with sgn det A"),
    Rule(name="fixed_curve_residual", group="multiplicity", threshold=1e-5, comparison="le",
         description="max ||P(x) - x|| over 8 points of rho* Gamma at omega*"),
    Rule(name="fixed_curve_spread", group="multiplicity", threshold=0.01, comparison="ge",
         description="largest distance between the checked fixed points"),
    Rule(name="detuned_curve_residual", group="resonance", threshold=1e-3, comparison="ge",
         description="max ||P(x) - x|| over rho* Gamma at 1.01 omega*"),
    Rule(name="detuned_equilibrium_residual", group="resonance", threshold=1e-9, comparison="le",
         description="||P(rho* x_hat) - rho* x_hat|| at 1.01 omega*"),
    Rule(name="converged_fraction", group="trichotomy", threshold=1.0, comparison="ge",
         description="subcase a: share of sampled orbits converging to rho* x_hat"),
    Rule(name="boundary_fraction", group="trichotomy", threshold=0.95, comparison="ge",
         description="subcase b: share of sampled orbits with min coordinate < 1e-3"),
    Rule(name="subharmonic_return_residual", group="trichotomy", threshold=1e-6, comparison="le",
         description="subcase c at omega*/2: max ||P^2(x) - x|| on rho* Gamma"),
    Rule(name="subharmonic_single_step", group="trichotomy", threshold=1e-3, comparison="ge",
         description="subcase c at omega*/2: min ||P(x) - x|| on rho* Gamma"),
    Rule(name="sign_law_fraction", group="sign_law", threshold=1.0, comparison="ge",
         description="share of sampled class-27 matrices with sgn vartheta = -sgn zeta"),
    Rule(name="simplex_scaling_difference", group="simplex", threshold=1e-3, comparison="le",
         description="max |R_P(u) - rho* R_Phi(u)| over shared rays"),
]

RULES_BY_NAME: Dict[str, Rule] = {rule.name: rule for rule in VERIFY_RULES}
CHECK_GROUPS: List[str] = list(dict.fromkeys(rule.group for rule in VERIFY_RULES))

VERIFY_COLUMNS = ["group", "rule", "value", "threshold", "comparison", "status", "description"]


def passes(rule: Rule, value: Optional[float]) -> bool:
    if value is None or math.isnan(value):
        return False
    if rule.comparison == "le":
        return value <= rule.threshold
    return value >= rule.threshold


def rule_row(name: str, value: Optional[float]) -> dict:
    rule = RULES_BY_NAME[name]
    return {
        "group": rule.group,
        "rule": rule.name,
        "value": value,
        "threshold": rule.threshold,
        "comparison": rule.comparison,
        "status": "pass" if passes(rule, value) else "fail",
        "description": rule.description,
    }


def skipped_row(name: str, reason: str) -> dict:
    row = rule_row(name, None)
    row.update(status="skipped", description=reason)
    return row


def skipped_rows(group: str, reason: str) -> List[dict]:
    return [skipped_row(rule.name, reason) for rule in VERIFY_RULES if rule.group == group]


def verification_frame(rows: List[dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=VERIFY_COLUMNS)


def all_passed(table: pd.DataFrame) -> bool:
    return not bool((table["status"] == "fail").any())
