#loads model files + calls the slv_core operations behind each subcommand

import json
import logging
import math
import os
import tempfile
import warnings
from contextlib import suppress
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from slv_cli.rules import CHECK_GROUPS, all_passed, rule_row, skipped_row, skipped_rows, verification_frame
from slv_cli.schemas import DeriveDocument, RunConfig
from slv_core.classify import (ClassLabel, dynamics_verdict, invariants_of, sample_class_27_matrices,
                               zeta_threshold)
from slv_core.errors import ModelValidationError, NonhyperbolicWarning, NumericalFailure, PreconditionFailed
from slv_core.fixedpoints import (Stability, autonomous_positive_equilibrium, census_frame,
                                  fixed_point_census, fixed_point_residual, positive_fixed_points)
from slv_core.flow import DEFAULT_TOL, rho_hat_by_quadrature, seasonal_trajectory
from slv_core.model import ModelSpec, average_growth_rate, derive_constants, require_admissible, validate, zeta_of
from slv_core.orbits import (ORBIT_TOL, construct_multiplicity, find_periodic_orbit, half_period_gap,
                             linearization_period, minimal_period_and_eta, multiplicity_summary,
                             subharmonic_residuals, verify_fixed_curve)
from slv_core.poincare import conjugacy_max_residual, iterate
from slv_core.simplex import SIMPLEX_TOL, fate_counts, sample_portrait, simplex_scaling_residual

logger = logging.getLogger(__name__)

THREADS_ENV = "SEASONAL_LV_THREADS"
DEFAULT_OUTPUT_DIR = Path("outputs")
CSV_FLOAT_FORMAT = "%.17g"

DEFAULT_SIM_X0 = (0.1, 0.2, 0.3)
DEFAULT_SIM_SEASONS = 20
DEFAULT_PORTRAIT_N = 100
DEFAULT_PORTRAIT_K = 5000
ORBIT_SEED_OFFSET = np.array([0.1, -0.05, 0.0])

CONJUGACY_POINTS = 20
CONJUGACY_KS = (1, 10, 50)
SIGN_LAW_SAMPLES = 50
BOUNDARY_COORD = 1e-3
DETUNING = 1.01


class ModelFileError(ModelValidationError):
    code = "model_file"


class CommandOutput(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    record: Dict[str, Any]
    documents: Dict[str, Any] = Field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = Field(default_factory=dict)
    passed: bool = True


# ---------- input ----------
def load_model(path) -> ModelSpec:
    """
    Accepts a bare model {"A","b","mu","phi","omega"} or a `derive` document
    {"model", "constants"[, "diagnostics"]}; stated constants must equal the recomputed ones.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc

    if isinstance(raw, dict) and "model" in raw:
        doc = DeriveDocument.model_validate(raw)
        recomputed = require_admissible(doc.model)
        if recomputed != doc.constants:
            raise ModelValidationError(
                f"stated constants {doc.constants.model_dump()} differ from recomputed "
                f"{recomputed.model_dump()}",
                code="constants_mismatch",
            )
        return doc.model
    return ModelSpec.model_validate(raw)


def effective_workers(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if not cap:
        return requested
    try:
        return max(1, min(requested, int(cap)))
    except ValueError:
        logger.warning("ignoring %s=%r (not an integer)", THREADS_ENV, cap)
        return requested


def _tol(cfg: RunConfig, default: float = DEFAULT_TOL) -> float:
    return cfg.tol if cfg.tol is not None else default


def default_orbit_seed(spec: ModelSpec) -> np.ndarray:
    x_hat = autonomous_positive_equilibrium(spec.matrix, spec.b)
    if x_hat is None:
        raise PreconditionFailed("no positive equilibrium of the flow", code="no_positive_equilibrium")
    return x_hat * (1.0 + ORBIT_SEED_OFFSET)


# ---------- output ----------
def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def to_json(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(obj, indent=indent, default=_json_default)


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    return path


def write_outputs(output: CommandOutput, output_dir: Path) -> List[Path]:
    written = []
    for name, doc in output.documents.items():
        written.append(atomic_write_text(output_dir / name, to_json(doc) + "\n"))
    for name, frame in output.tables.items():
        written.append(atomic_write_text(output_dir / name, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT)))
    logger.info("wrote %s", [str(p) for p in written])
    return written


# ---------- commands ----------
def derive_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    consts = require_admissible(spec)
    record = {
        "model": spec.to_json_dict(),
        "constants": consts.model_dump(),
        "diagnostics": validate(spec).model_dump(),
    }
    return CommandOutput(record=record, documents={"derive.json": record})


def classify_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    require_admissible(spec)
    record = dynamics_verdict(spec).to_json_dict()
    return CommandOutput(record=record, documents={"classify.json": record})


def fixed_points_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    require_admissible(spec)
    records = fixed_point_census(spec, tol=_tol(cfg))
    record = {"model": spec.to_json_dict(), "fixed_points": [rec.to_json_dict() for rec in records]}
    return CommandOutput(record=record, documents={"fixed_points.json": record},
                         tables={"fixed_points.csv": census_frame(records)})


def simulate_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    require_admissible(spec)
    x0 = np.array(cfg.x0 if cfg.x0 is not None else DEFAULT_SIM_X0, dtype=float)
    n_seasons = cfg.n or DEFAULT_SIM_SEASONS
    traj = seasonal_trajectory(spec, x0, n_seasons, tol=_tol(cfg))
    final = traj[["x1", "x2", "x3"]].iloc[-1].to_numpy()
    record = {"x0": x0.tolist(), "n_seasons": n_seasons, "rows": int(len(traj)), "final": final.tolist()}
    if cfg.k is not None:
        trace = iterate(spec, x0, cfg.k, tol=_tol(cfg))
        record.update(fate=trace.fate.value, iterations=trace.k, last_iterate=trace.points[-1].tolist())
    return CommandOutput(record=record, tables={"trajectory.csv": traj})


def portrait_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    require_admissible(spec)
    portrait = sample_portrait(
        spec,
        n_init=cfg.n or DEFAULT_PORTRAIT_N,
        k_max=cfg.k or DEFAULT_PORTRAIT_K,
        rng_seed=cfg.rng_seed,
        tol=_tol(cfg),
        workers=effective_workers(cfg.workers),
    )
    counts = fate_counts(portrait)
    record = {
        "n_init": int(len(portrait)),
        "k_max": cfg.k or DEFAULT_PORTRAIT_K,
        "rng_seed": cfg.rng_seed,
        "fates": counts.to_dict(orient="records"),
    }
    return CommandOutput(record=record, tables={"portrait.csv": portrait, "fate_counts.csv": counts})


def periodic_orbit_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    require_admissible(spec)
    A, b = spec.matrix, spec.b
    seed = np.array(cfg.x0, dtype=float) if cfg.x0 is not None else default_orbit_seed(spec)
    orbit = find_periodic_orbit(A, b, seed, integrator_tol=_tol(cfg))
    curve = minimal_period_and_eta(spec, orbit)
    record = {
        **orbit.header(),
        "seed": seed.tolist(),
        "t_linearization": linearization_period(A, b, autonomous_positive_equilibrium(A, b)),
        "half_period_gap": half_period_gap(A, b, orbit, _tol(cfg)),
        "curve": curve.model_dump(mode="json"),
    }
    return CommandOutput(record=record, documents={"orbit.json": record}, tables={"orbit.csv": orbit.to_frame()})


def construct_multiplicity_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    seed = np.array(cfg.x0, dtype=float) if cfg.x0 is not None else default_orbit_seed(spec)
    resonant, orbit = construct_multiplicity(spec.matrix, spec.b, spec.mu, spec.phi, seed)
    summary = multiplicity_summary(resonant, orbit, tol=_tol(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonhyperbolicWarning)
        fixed = positive_fixed_points(resonant, orbit=orbit, tol=_tol(cfg))

    record = {
        "model": resonant.to_json_dict(),
        "constants": derive_constants(resonant).model_dump(),
        "T_gamma": orbit.T_gamma,
        "omega_star": resonant.omega,
        "curve": minimal_period_and_eta(resonant, orbit).model_dump(mode="json"),
        "verification": summary,
        "positive_fixed_points": [rec.to_json_dict() for rec in fixed],
    }
    return CommandOutput(
        record=record,
        documents={"resonant_model.json": resonant.to_json_dict(), "multiplicity.json": record},
        tables={"orbit.csv": orbit.to_frame()},
    )


# ---------- verify ----------
class VerifyContext:
    """Lazily computed pieces shared by several check groups."""

    def __init__(self, spec: ModelSpec, cfg: RunConfig):
        self.spec = spec
        self.cfg = cfg
        self.tol = _tol(cfg)
        self.consts = require_admissible(spec)

    @cached_property
    def verdict(self):
        return dynamics_verdict(self.spec, with_census=False)

    @cached_property
    def x_hat(self) -> Optional[np.ndarray]:
        return autonomous_positive_equilibrium(self.spec.matrix, self.spec.b)

    @cached_property
    def equilibrium_record(self):
        if self.x_hat is None:
            return None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonhyperbolicWarning)
            return positive_fixed_points(self.spec, tol=self.tol)[0]

    @cached_property
    def resonance(self):
        """(resonant spec, orbit) when zeta = 0, det A > 0 and x_hat exists, else None."""
        A = self.spec.matrix
        if self.x_hat is None or np.linalg.det(A) <= 0 or abs(zeta_of(A)) > zeta_threshold(A):
            return None
        seed = np.array(self.cfg.x0, dtype=float) if self.cfg.x0 is not None else default_orbit_seed(self.spec)
        return construct_multiplicity(A, self.spec.b, self.spec.mu, self.spec.phi, seed, ORBIT_TOL)


def _check_conjugacy(ctx: VerifyContext) -> List[dict]:
    rng = np.random.default_rng(ctx.cfg.rng_seed)
    X0 = rng.uniform(0.01, 1.0, size=(CONJUGACY_POINTS, 3))
    return [rule_row("conjugacy_residual", conjugacy_max_residual(ctx.spec, X0, CONJUGACY_KS, ctx.tol))]


def _check_rho_hat(ctx: VerifyContext) -> List[dict]:
    return [rule_row("rho_hat_quadrature_error", abs(rho_hat_by_quadrature(ctx.spec) - ctx.consts.rho_hat))]


def _check_jacobian(ctx: VerifyContext) -> List[dict]:
    rec = ctx.equilibrium_record
    if rec is None:
        return skipped_rows("jacobian", "no positive equilibrium")
    return [rule_row("jacobian_exponential_residual", rec.checks.get("expm_residual", math.nan))]


def _check_eigen(ctx: VerifyContext) -> List[dict]:
    rec = ctx.equilibrium_record
    if rec is None:
        return skipped_rows("eigen", "no positive equilibrium")
    return [
        rule_row("pair_sum_error", rec.checks.get("pair_sum_error", math.nan)),
        rule_row("pair_product_sign", rec.checks.get("pair_product_sign", math.nan)),
        rule_row("perron_angle", rec.checks.get("perron_angle", math.nan)),
    ]


def _check_index(ctx: VerifyContext) -> List[dict]:
    rec = ctx.equilibrium_record
    if rec is None:
        return skipped_rows("index", "no positive equilibrium")
    if rec.stability is Stability.NONHYPERBOLIC:
        return skipped_rows("index", "positive fixed point is not hyperbolic")
    if np.linalg.det(ctx.spec.matrix) < 0:
        ok = rec.n_unstable == 1 and rec.index == -1
    else:
        ok = rec.n_unstable in (0, 2) and rec.index == 1
    return [rule_row("index_law", 1.0 if ok else 0.0)]


def _check_multiplicity(ctx: VerifyContext) -> List[dict]:
    if ctx.resonance is None:
        return skipped_rows("multiplicity", "needs zeta = 0, det A > 0 and a positive equilibrium")
    resonant, orbit = ctx.resonance
    summary = multiplicity_summary(resonant, orbit, tol=ctx.tol)
    return [
        rule_row("fixed_curve_residual", summary["fixed_curve_residual"]),
        rule_row("fixed_curve_spread", summary["max_pairwise_distance"]),
    ]


def _check_resonance(ctx: VerifyContext) -> List[dict]:
    if ctx.resonance is None:
        return skipped_rows("resonance", "needs zeta = 0, det A > 0 and a positive equilibrium")
    resonant, orbit = ctx.resonance
    detuned = resonant.with_omega(DETUNING * resonant.omega)
    equilibrium = derive_constants(detuned).rho_star * ctx.x_hat
    return [
        rule_row("detuned_curve_residual", verify_fixed_curve(detuned, orbit, tol=ctx.tol)),
        rule_row("detuned_equilibrium_residual", fixed_point_residual(detuned, equilibrium, ctx.tol)),
    ]


def _check_trichotomy(ctx: VerifyContext) -> List[dict]:
    verdict = ctx.verdict
    if verdict.class_label is not ClassLabel.CLASS_27:
        return skipped_rows("trichotomy", "model is not in class 27")

    names = ["converged_fraction", "boundary_fraction", "subharmonic_return_residual", "subharmonic_single_step"]
    if verdict.subcase == "c":
        if ctx.resonance is None:
            return skipped_rows("trichotomy", "no periodic orbit family available")
        resonant, orbit = ctx.resonance
        sub = subharmonic_residuals(resonant.with_omega(resonant.omega / 2.0), orbit, q=2, tol=ctx.tol)
        rows = [rule_row("subharmonic_return_residual", sub["max_return_residual"]),
                rule_row("subharmonic_single_step", sub["min_single_step_residual"])]
        return [skipped_row(n, "subcase c") for n in names[:2]] + rows

    portrait = sample_portrait(
        ctx.spec,
        n_init=ctx.cfg.n or DEFAULT_PORTRAIT_N,
        k_max=ctx.cfg.k or DEFAULT_PORTRAIT_K,
        rng_seed=ctx.cfg.rng_seed,
        tol=ctx.tol,
        workers=effective_workers(ctx.cfg.workers),
    )
    if verdict.subcase == "a":
        hits = (portrait["fate"] == "converged") & portrait["limit_label"].fillna("").str.startswith("p")
        return [rule_row("converged_fraction", float(hits.mean()))] + \
            [skipped_row(n, "subcase a") for n in names[1:]]
    hits = portrait["min_coordinate"] < BOUNDARY_COORD
    return [skipped_row(names[0], "subcase b"), rule_row("boundary_fraction", float(hits.mean()))] + \
        [skipped_row(n, "subcase b") for n in names[2:]]


def _check_sign_law(ctx: VerifyContext) -> List[dict]:
    if ctx.verdict.class_label is not ClassLabel.CLASS_27:
        return skipped_rows("sign_law", "model is not in class 27")
    r = average_growth_rate(ctx.spec.b, ctx.spec.mu, ctx.spec.phi)
    matrices = [ctx.spec.matrix] + sample_class_27_matrices(SIGN_LAW_SAMPLES, seed=ctx.cfg.rng_seed)
    agree = []
    for A in matrices:
        inv = invariants_of(A, r)
        agree.append(np.sign(inv.vartheta) == -np.sign(inv.zeta)
                     or abs(inv.zeta) <= zeta_threshold(A))
    return [rule_row("sign_law_fraction", float(np.mean(agree)))]


def _check_simplex(ctx: VerifyContext) -> List[dict]:
    report = simplex_scaling_residual(ctx.spec, tol=_tol(ctx.cfg, SIMPLEX_TOL))
    return [rule_row("simplex_scaling_difference", report["max_difference"])]


VERIFY_CHECKS: Dict[str, Callable[[VerifyContext], List[dict]]] = {
    "conjugacy": _check_conjugacy,
    "rho_hat": _check_rho_hat,
    "jacobian": _check_jacobian,
    "eigen": _check_eigen,
    "index": _check_index,
    "multiplicity": _check_multiplicity,
    "resonance": _check_resonance,
    "trichotomy": _check_trichotomy,
    "sign_law": _check_sign_law,
    "simplex": _check_simplex,
}


def verify_service(spec: ModelSpec, cfg: RunConfig) -> CommandOutput:
    unknown = sorted(set(cfg.only) - set(CHECK_GROUPS))
    if unknown:
        raise PreconditionFailed(f"unknown checks {unknown}; choose from {CHECK_GROUPS}", code="unknown_check")
    groups = [g for g in CHECK_GROUPS if not cfg.only or g in cfg.only]

    ctx = VerifyContext(spec, cfg)
    rows: List[dict] = []
    for group in groups:
        try:
            rows += VERIFY_CHECKS[group](ctx)
        except NumericalFailure as exc:
            logger.warning("check %s failed: %s", group, exc)
            for row in skipped_rows(group, f"{exc.code}: {exc.detail}"):
                rows.append({**row, "status": "fail"})

    table = verification_frame(rows)
    passed = all_passed(table)
    record = {
        "model": spec.to_json_dict(),
        "passed": passed,
        "checks": table.to_dict(orient="records"),
    }
    return CommandOutput(record=record, documents={"verify.json": record},
                         tables={"verify.csv": table}, passed=passed)


SERVICES: Dict[str, Callable[[ModelSpec, RunConfig], CommandOutput]] = {
    "derive": derive_service,
    "classify": classify_service,
    "fixed-points": fixed_points_service,
    "simulate": simulate_service,
    "portrait": portrait_service,
    "periodic-orbit": periodic_orbit_service,
    "construct-multiplicity": construct_multiplicity_service,
    "verify": verify_service,
}

# commands whose main artifact is a CSV; they write to DEFAULT_OUTPUT_DIR when --out is absent
CSV_COMMANDS = {"simulate", "portrait", "periodic-orbit", "construct-multiplicity"}
