# slv_core/classify.py

"""
Algebraic invariants of A and the global-dynamics verdict.

What this file supports:
- compute_invariants(spec): alpha_i, beta_i, zeta, gamma_ij, beta_ij, w_ij, vartheta, det A
- is_class_26 / is_class_27: first permutation (lexicographic) satisfying the conditions
- dynamics_verdict(spec): decision tree on x_hat, det A, class membership and sgn zeta
- sample_class_26_matrices / sample_class_27_matrices: rejection samplers over a_ij in (0, 3)

NOTE:
- classes 28-33 are reported only as the attractor / repeller dichotomy given by sgn zeta;
  classes 1-18 and 19-25 are reported as ranges.
- permutations are 0-based tuples in code and 1-based lists in JSON.
"""

from __future__ import annotations

import logging
from enum import Enum
from itertools import permutations
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from slv_core.fixedpoints import FixedPointKind, autonomous_positive_equilibrium, fixed_point_census
from slv_core.model import ModelSpec, average_growth_rate, cyclic_alpha_beta, inf_norm

logger = logging.getLogger(__name__)

ZETA_REL_EPS = 1e-10
BETA_DENOMINATOR_EPS = 1e-12
ORDERED_PAIRS: List[Tuple[int, int]] = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
PERMUTATIONS: List[Tuple[int, int, int]] = list(permutations(range(3)))

# strict sign patterns of gamma_ij over ORDERED_PAIRS
CLASS_26_GAMMA = (1, 1, -1, -1, 1, -1)
CLASS_27_GAMMA = (1, -1, -1, 1, 1, -1)


def pair_key(i: int, j: int) -> str:
    return f"{i + 1}{j + 1}"


class ClassLabel(str, Enum):
    NO_POSITIVE_FP = "1-18"
    CLASSES_19_25 = "19-25"
    CLASS_26 = "26"
    CLASS_27 = "27"
    CLASSES_28_33 = "28-33"
    UNRESOLVED = "unresolved"


PREDICTIONS: Dict[Tuple[ClassLabel, Optional[str]], Tuple[str, str]] = {
    (ClassLabel.NO_POSITIVE_FP, None): (
        "trivial_dynamics", "no positive fixed point; every orbit converges to a boundary fixed point"),
    (ClassLabel.CLASSES_19_25, None): (
        "saddle_positive_fixed_point", "unique positive fixed point, a saddle on the carrying simplex"),
    (ClassLabel.CLASS_26, "a"): (
        "positive_fixed_point_attractor_bistable",
        "unique positive fixed point, an attractor sharing the simplex with an attracting axial point"),
    (ClassLabel.CLASS_26, "b"): (
        "positive_fixed_point_repeller",
        "unique positive fixed point, a repeller; the other interior orbits go to an axial attractor"),
    (ClassLabel.CLASS_26, "c"): (
        "closed_curves_inside_heteroclinic_cycle",
        "continuum of invariant closed curves enclosed by a heteroclinic cycle"),
    (ClassLabel.CLASS_27, "a"): (
        "positive_fixed_point_globally_attracting",
        "positive fixed point globally attracting in the interior of the carrying simplex"),
    (ClassLabel.CLASS_27, "b"): (
        "heteroclinic_cycle_attracting",
        "every interior orbit except the positive fixed point converges to the heteroclinic cycle"),
    (ClassLabel.CLASS_27, "c"): (
        "continuum_of_invariant_closed_curves",
        "the interior of the carrying simplex is covered by invariant closed curves"),
    (ClassLabel.CLASSES_28_33, "attractor"): (
        "positive_fixed_point_attractor", "unique positive fixed point, an attractor; trivial dynamics"),
    (ClassLabel.CLASSES_28_33, "repeller"): (
        "positive_fixed_point_repeller", "unique positive fixed point, a repeller; trivial dynamics"),
    (ClassLabel.UNRESOLVED, None): ("unresolved", "no decision rule applies"),
}


class InvariantBundle(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: float
    alpha: List[float]
    beta: List[float]
    zeta: float
    gamma: Dict[str, float]
    beta_pairs: Dict[str, Optional[float]]
    w: Dict[str, float]
    vartheta: float
    detA: float

    def gamma_signs(self) -> Tuple[int, ...]:
        return tuple(int(np.sign(self.gamma[pair_key(i, j)])) for i, j in ORDERED_PAIRS)


class DynamicsVerdict(BaseModel):
    class_label: ClassLabel
    subcase: Optional[str] = None
    prediction: str
    description: str
    permutation: Optional[List[int]] = None
    invariants: InvariantBundle
    census: Optional[Dict[str, object]] = None

    def to_json_dict(self) -> dict:
        return {
            "class": self.class_label.value,
            "subcase": self.subcase,
            "zeta": self.invariants.zeta,
            "vartheta": self.invariants.vartheta,
            "detA": self.invariants.detA,
            "index_prediction": int(np.sign(self.invariants.detA)),
            "gamma": [self.invariants.gamma[pair_key(i, j)] for i, j in ORDERED_PAIRS],
            "prediction": self.prediction,
            "description": self.description,
            "permutation": self.permutation,
            "invariants": self.invariants.model_dump(),
            "census": self.census,
        }


def invariants_of(A, r: float) -> InvariantBundle:
    A = np.asarray(A, dtype=float)
    alpha, beta = cyclic_alpha_beta(A)

    gamma = {pair_key(i, j): r * (A[i, i] - A[j, i]) for i, j in ORDERED_PAIRS}
    beta_pairs = {}
    for i, j in ORDERED_PAIRS:
        denom = A[i, i] * A[j, j] - A[i, j] * A[j, i]
        beta_pairs[pair_key(i, j)] = (
            r * (A[j, j] - A[i, j]) / denom if abs(denom) > BETA_DENOMINATOR_EPS else None
        )
    w = {pair_key(i, j): r - A[j, i] * r / A[i, i] for i, j in ORDERED_PAIRS}
    vartheta = w["12"] * w["23"] * w["31"] + w["21"] * w["13"] * w["32"]

    return InvariantBundle(
        r=r,
        alpha=[float(a) for a in alpha],
        beta=[float(b) for b in beta],
        zeta=float(np.prod(beta) - np.prod(alpha)),
        gamma={k: float(v) for k, v in gamma.items()},
        beta_pairs={k: (float(v) if v is not None else None) for k, v in beta_pairs.items()},
        w={k: float(v) for k, v in w.items()},
        vartheta=float(vartheta),
        detA=float(np.linalg.det(A)),
    )


def compute_invariants(spec: ModelSpec) -> InvariantBundle:
    return invariants_of(spec.matrix, average_growth_rate(spec.b, spec.mu, spec.phi))


def zeta_threshold(A) -> float:
    return ZETA_REL_EPS * inf_norm(A) ** 3


def _permuted(A: np.ndarray, perm) -> np.ndarray:
    return A[np.ix_(perm, perm)]


def _class_26_search(A, r: float):
    """Returns (first permutation satisfying (i)-(iii) or None, degenerate flag)."""
    A = np.asarray(A, dtype=float)
    degenerate = False
    for perm in PERMUTATIONS:
        inv = invariants_of(_permuted(A, perm), r)
        if inv.gamma_signs() != CLASS_26_GAMMA:
            continue
        bp = inv.beta_pairs
        needed = [bp["23"], bp["32"], bp["13"], bp["31"]]
        if any(v is None for v in needed):
            degenerate = True
            continue
        Ap = _permuted(A, perm)
        cond_ii = Ap[0, 1] * bp["23"] + Ap[0, 2] * bp["32"] > r
        cond_iii = Ap[1, 0] * bp["13"] + Ap[1, 2] * bp["31"] < r
        if cond_ii and cond_iii:
            return perm, degenerate
    return None, degenerate


def is_class_26(spec: ModelSpec) -> Optional[Tuple[int, int, int]]:
    perm, _ = _class_26_search(spec.matrix, average_growth_rate(spec.b, spec.mu, spec.phi))
    return perm


def _class_27_search(A, r: float) -> Optional[Tuple[int, int, int]]:
    A = np.asarray(A, dtype=float)
    for perm in PERMUTATIONS:
        if invariants_of(_permuted(A, perm), r).gamma_signs() == CLASS_27_GAMMA:
            return perm
    return None


def is_class_27(spec: ModelSpec) -> Optional[Tuple[int, int, int]]:
    return _class_27_search(spec.matrix, average_growth_rate(spec.b, spec.mu, spec.phi))


def census_summary(records) -> Dict[str, object]:
    counts = {kind.value: 0 for kind in FixedPointKind}
    for rec in records:
        counts[rec.kind.value] += 1
    return {
        "counts": counts,
        "fixed_points": [
            {"label": rec.label, "stability": rec.stability.value if rec.stability else None,
             "stability_on_simplex": rec.stability_on_simplex.value if rec.stability_on_simplex else None,
             "index": rec.index}
            for rec in records
        ],
    }


def dynamics_verdict(spec: ModelSpec, with_census: bool = True) -> DynamicsVerdict:
    A = spec.matrix
    r = average_growth_rate(spec.b, spec.mu, spec.phi)
    inv = invariants_of(A, r)
    eps_zeta = zeta_threshold(A)

    def zeta_subcase() -> str:
        if abs(inv.zeta) <= eps_zeta:
            return "c"
        return "a" if inv.zeta < 0 else "b"

    x_hat = autonomous_positive_equilibrium(A, spec.b)
    label, subcase, perm = ClassLabel.UNRESOLVED, None, None

    if x_hat is None:
        label = ClassLabel.NO_POSITIVE_FP
    elif inv.detA < 0:
        label = ClassLabel.CLASSES_19_25
    else:
        perm27 = _class_27_search(A, r)
        perm26, degenerate = _class_26_search(A, r)
        if perm27 is not None:
            label, subcase, perm = ClassLabel.CLASS_27, zeta_subcase(), perm27
        elif perm26 is not None:
            label, subcase, perm = ClassLabel.CLASS_26, zeta_subcase(), perm26
        elif degenerate:
            logger.warning("class 26 test hit a degenerate beta_ij denominator; verdict unresolved")
        elif abs(inv.zeta) > eps_zeta:
            label = ClassLabel.CLASSES_28_33
            subcase = "attractor" if inv.zeta < 0 else "repeller"

    prediction, description = PREDICTIONS[(label, subcase if label in (
        ClassLabel.CLASS_26, ClassLabel.CLASS_27, ClassLabel.CLASSES_28_33) else None)]

    census = census_summary(fixed_point_census(spec)) if with_census else None
    verdict = DynamicsVerdict(
        class_label=label,
        subcase=subcase,
        prediction=prediction,
        description=description,
        permutation=[p + 1 for p in perm] if perm is not None else None,
        invariants=inv,
        census=census,
    )
    logger.info("verdict: class %s subcase %s (zeta=%.6g, vartheta=%.6g)",
                label.value, subcase, inv.zeta, inv.vartheta)
    return verdict


# ---------- rejection samplers ----------
def _sample_matrices(accept, n: int, seed: int, low: float, high: float, max_draws: int) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    found: List[np.ndarray] = []
    draws = 0
    while len(found) < n and draws < max_draws:
        A = rng.uniform(low, high, size=(3, 3))
        draws += 1
        if np.all(A > 0) and accept(A):
            found.append(A)
    if len(found) < n:
        logger.warning("rejection sampler: %d/%d matrices after %d draws", len(found), n, draws)
    else:
        logger.info("rejection sampler: %d matrices after %d draws", n, draws)
    return found


def sample_class_27_matrices(n: int = 50, seed: int = 0, low: float = 0.0, high: float = 3.0,
                             max_draws: int = 200_000) -> List[np.ndarray]:
    return _sample_matrices(lambda A: _class_27_search(A, 1.0) is not None, n, seed, low, high, max_draws)


def sample_class_26_matrices(n: int = 1, seed: int = 0, low: float = 0.0, high: float = 3.0,
                             max_draws: int = 500_000) -> List[np.ndarray]:
    def accept(A):
        perm, _ = _class_26_search(A, 1.0)
        return perm is not None and np.linalg.det(A) > 0

    return _sample_matrices(accept, n, seed, low, high, max_draws)
