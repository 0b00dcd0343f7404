# slv_core/fixtures.py

"""
Named model instances used by the tests, the CLI `verify` suite and run_local.

- May-Leonard family: a_ii = 1, a12 = a23 = a31 = alpha, a13 = a21 = a32 = beta
- identity matrix, a det A < 0 saddle instance, a det A > 0 repeller instance
- a hand-picked class-26 instance with the identity permutation, and sampled_class_26_spec
  which draws one from the class-26 rejection sampler
"""

from __future__ import annotations

from typing import Dict, List

from slv_core.classify import ClassLabel, dynamics_verdict, sample_class_26_matrices
from slv_core.errors import PreconditionFailed
from slv_core.model import ModelSpec

DEFAULT_SEASON = {"b": 1.0, "mu": 0.5, "phi": 0.5, "omega": 1.0}


def may_leonard_matrix(alpha: float, beta: float) -> List[List[float]]:
    return [
        [1.0, alpha, beta],
        [beta, 1.0, alpha],
        [alpha, beta, 1.0],
    ]


def may_leonard_spec(alpha: float, beta: float, **season) -> ModelSpec:
    return ModelSpec(A=may_leonard_matrix(alpha, beta), **{**DEFAULT_SEASON, **season})


def identity_spec(**season) -> ModelSpec:
    return ModelSpec(A=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], **{**DEFAULT_SEASON, **season})


def saddle_spec(**season) -> ModelSpec:
    # det A = -2.5, x_hat = (0.2, 0.2, 0.8)
    return ModelSpec(A=[[1.0, 2.0, 0.5], [2.0, 1.0, 0.5], [0.5, 0.5, 1.0]], **{**DEFAULT_SEASON, **season})


def repeller_spec(**season) -> ModelSpec:
    # det A = 5, x_hat = (0.2, 0.2, 0.2), zeta = 2
    return ModelSpec(A=[[1.0, 2.0, 2.0], [2.0, 1.0, 2.0], [2.0, 2.0, 1.0]], **{**DEFAULT_SEASON, **season})


def class_26_spec(**season) -> ModelSpec:
    # det A = 0.71, zeta = 0.05; planar fixed points in the planes x1 = 0 and x2 = 0
    return ModelSpec(A=[[1.0, 3.5, 0.8], [0.5, 1.0, 1.2], [0.9, 2.0, 1.0]], **{**DEFAULT_SEASON, **season})


def sampled_class_26_spec(seed: int = 0, n_candidates: int = 4, **season) -> ModelSpec:
    """First sampled matrix, entries in (0, 3), whose verdict is class 26 under the given season."""
    for A in sample_class_26_matrices(n=n_candidates, seed=seed):
        spec = ModelSpec(A=A.tolist(), **{**DEFAULT_SEASON, **season})
        if dynamics_verdict(spec, with_census=False).class_label is ClassLabel.CLASS_26:
            return spec
    raise PreconditionFailed(f"no class-26 matrix among {n_candidates} draws (seed {seed})",
                             code="sampler_exhausted")


FIXTURES: Dict[str, ModelSpec] = {
    "mayleonard-1.2-0.5": may_leonard_spec(1.2, 0.5),
    "mayleonard-1.5-0.8": may_leonard_spec(1.5, 0.8),
    "mayleonard-1.5-0.5": may_leonard_spec(1.5, 0.5),
    "identity": identity_spec(),
    "saddle-detneg": saddle_spec(),
    "repeller": repeller_spec(),
    "class26": class_26_spec(),
}
