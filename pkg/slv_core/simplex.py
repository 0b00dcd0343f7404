# slv_core/simplex.py

"""
Carrying simplex approximation, the boundary heteroclinic cycle and phase portraits.

Carrying simplex (graph transform):
- a surface is stored as S(u) = x1 + x2 + x3 over a barycentric lattice of directions u;
  the point of the surface in direction u is S(u) * u
- two surfaces are pushed forward by the map: one starting below the simplex (it grows),
  one starting outside the box that contains it (it shrinks); each image is re-gridded
  by Clough-Tocher interpolation over the barycentric coordinates of the image points
- along every requested ray the simplex radius is bracketed by the two surfaces; rays
  whose bracket stays wider than bracket_tol raise BracketFailure, are logged and skipped

Portraits: initial points log-uniform in [1e-3, 2 max(b/a_ii)]^3, iterated in fixed-size
chunks (optionally in worker processes) so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from typing import Callable, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import CloughTocher2DInterpolator, NearestNDInterpolator

from slv_core.classify import compute_invariants, is_class_27
from slv_core.errors import BracketFailure
from slv_core.fixedpoints import fixed_point_census, nearest_label, planar_fixed_points
from slv_core.flow import DEFAULT_TOL, flow_batch
from slv_core.model import ModelSpec, derive_constants
from slv_core.poincare import CONVERGED_TOL, Fate, iterate_batch, poincare_map_batch

logger = logging.getLogger(__name__)

N_RAYS = 256
K_ITERS = 150
BRACKET_TOL = 1e-4
GRID_RESOLUTION = 18
SIMPLEX_TOL = 1e-9
INSIDE_FACTOR = 1e-3
OUTSIDE_FACTOR = 1.25
UNORDERED_SLACK = 1e-6

PORTRAIT_LOW = 1e-3
PORTRAIT_CHUNK = 25
LIMIT_MATCH_RADIUS = 1e-5

PORTRAIT_COLUMNS = ["trace", "x0_1", "x0_2", "x0_3", "fate", "limit_label", "limit_1", "limit_2", "limit_3",
                    "final_1", "final_2", "final_3", "iterations", "min_coordinate", "curve_residual"]


# ---------- rays and lattice ----------
def fibonacci_octant_rays(n: int = N_RAYS) -> np.ndarray:
    """Unit vectors spread over the closed positive octant (golden-angle spiral on the cap)."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(n)
    z = 1.0 - (i + 0.5) / n
    azimuth = np.mod(i * golden, math.pi / 2.0)
    ring = np.sqrt(1.0 - z ** 2)
    return np.column_stack([ring * np.cos(azimuth), ring * np.sin(azimuth), z])


def barycentric_lattice(m: int = GRID_RESOLUTION) -> np.ndarray:
    nodes = [(i / m, j / m, (m - i - j) / m) for i in range(m + 1) for j in range(m + 1 - i)]
    return np.array(nodes)


def to_barycentric(directions) -> np.ndarray:
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    return D / D.sum(axis=1, keepdims=True)


def _interpolate(sites: np.ndarray, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Clough-Tocher on the first two barycentric coordinates, nearest-neighbour outside the hull."""
    out = CloughTocher2DInterpolator(sites[:, :2], values)(targets[:, :2])
    missing = ~np.isfinite(out)
    if missing.any():
        out[missing] = NearestNDInterpolator(sites[:, :2], values)(targets[missing, :2])
    return out


class SimplexMesh(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    system: str
    rays: np.ndarray
    radii: np.ndarray
    widths: np.ndarray
    failed_rays: List[int] = Field(default_factory=list)
    nodes: np.ndarray
    node_sums: np.ndarray
    iterations: int

    @property
    def points(self) -> np.ndarray:
        return self.rays * self.radii[:, None]

    def radius_along(self, directions) -> np.ndarray:
        u = to_barycentric(directions)
        return _interpolate(self.nodes, self.node_sums, u) * np.linalg.norm(u, axis=1)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "d1": self.rays[:, 0], "d2": self.rays[:, 1], "d3": self.rays[:, 2],
            "radius": self.radii, "bracket_width": self.widths,
        }, columns=["d1", "d2", "d3", "radius", "bracket_width"])


def _step_function(spec: ModelSpec, system: str, tol: float) -> Callable[[np.ndarray], np.ndarray]:
    if system == "map":
        return lambda X: poincare_map_batch(spec, X, tol)
    if system == "flow":
        consts = derive_constants(spec)
        return lambda X: flow_batch(spec.matrix, spec.b, X, consts.rho_hat, tol)
    raise ValueError(f"unknown system {system!r}, expected 'map' or 'flow'")


def _box_corner(spec: ModelSpec, system: str) -> np.ndarray:
    scale = derive_constants(spec).rho_star if system == "map" else 1.0
    return scale * spec.b / np.diag(spec.matrix)


def approximate_carrying_simplex(spec: ModelSpec, n_rays: int = N_RAYS, k_iters: int = K_ITERS,
                                 bracket_tol: float = BRACKET_TOL, system: str = "map",
                                 rays: Optional[np.ndarray] = None,
                                 grid_resolution: int = GRID_RESOLUTION,
                                 tol: float = SIMPLEX_TOL) -> SimplexMesh:
    step = _step_function(spec, system, tol)
    rays = fibonacci_octant_rays(n_rays) if rays is None else np.atleast_2d(np.asarray(rays, dtype=float))
    rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)

    nodes = barycentric_lattice(grid_resolution)
    q = _box_corner(spec, system)
    with np.errstate(divide="ignore"):
        exit_sum = np.where(nodes > 0, q / nodes, np.inf).min(axis=1)
    inside = np.full(len(nodes), INSIDE_FACTOR * q.min())
    outside = OUTSIDE_FACTOR * exit_sum

    iterations, gap = 0, math.inf
    for iterations in range(1, k_iters + 1):
        inside = _transform(step, nodes, inside)
        outside = _transform(step, nodes, outside)
        gap = np.max(np.abs(outside - inside) * np.linalg.norm(nodes, axis=1))
        if gap <= 0.5 * bracket_tol:
            break
    logger.info("graph transform (%s): %d iterations, node bracket %.3e", system, iterations, gap)

    u = to_barycentric(rays)
    u_norm = np.linalg.norm(u, axis=1)
    low = _interpolate(nodes, inside, u) * u_norm
    high = _interpolate(nodes, outside, u) * u_norm
    widths = np.abs(high - low)
    radii = 0.5 * (low + high)

    failed = []
    for i in np.flatnonzero(widths > bracket_tol):
        exc = BracketFailure(f"ray {i} bracket width {widths[i]:.3e} > {bracket_tol:.1e}", ray=rays[i].tolist())
        logger.warning("%s", exc)
        failed.append(int(i))
    keep = np.setdiff1d(np.arange(len(rays)), failed)

    return SimplexMesh(system=system, rays=rays[keep], radii=radii[keep], widths=widths[keep],
                       failed_rays=failed, nodes=nodes, node_sums=0.5 * (inside + outside),
                       iterations=iterations)


def _transform(step, nodes: np.ndarray, sums: np.ndarray) -> np.ndarray:
    images = step(sums[:, None] * nodes)
    image_sums = images.sum(axis=1)
    return _interpolate(images / image_sums[:, None], image_sums, nodes)


def simplex_scaling_residual(spec: ModelSpec, n_rays: int = N_RAYS, k_iters: int = K_ITERS,
                             grid_resolution: int = GRID_RESOLUTION, tol: float = SIMPLEX_TOL) -> dict:
    """Compares the map simplex with rho* times the flow simplex along shared rays."""
    rays = fibonacci_octant_rays(n_rays)
    mesh_map = approximate_carrying_simplex(spec, k_iters=k_iters, system="map", rays=rays,
                                            grid_resolution=grid_resolution, tol=tol)
    mesh_flow = approximate_carrying_simplex(spec, k_iters=k_iters, system="flow", rays=rays,
                                             grid_resolution=grid_resolution, tol=tol)
    rho = derive_constants(spec).rho_star
    shared = np.setdiff1d(np.arange(len(rays)), mesh_map.failed_rays + mesh_flow.failed_rays)
    map_pos = {int(i): k for k, i in enumerate(np.setdiff1d(np.arange(len(rays)), mesh_map.failed_rays))}
    flow_pos = {int(i): k for k, i in enumerate(np.setdiff1d(np.arange(len(rays)), mesh_flow.failed_rays))}
    diff = np.array([abs(mesh_map.radii[map_pos[int(i)]] - rho * mesh_flow.radii[flow_pos[int(i)]])
                     for i in shared])
    return {
        "max_difference": float(diff.max()) if diff.size else math.nan,
        "n_shared_rays": int(len(shared)),
        "n_failed_map": len(mesh_map.failed_rays),
        "n_failed_flow": len(mesh_flow.failed_rays),
    }


def is_unordered(points, slack: float = UNORDERED_SLACK) -> bool:
    """True when no two points are strictly ordered (by more than slack in every coordinate)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    diff = P[None, :, :] - P[:, None, :]
    return not bool(np.any(np.all(diff > slack, axis=2)))


def mesh_invariance_defect(spec: ModelSpec, mesh: SimplexMesh, tol: float = SIMPLEX_TOL) -> float:
    """Largest radial distance between P(mesh point) and the interpolated mesh surface."""
    images = poincare_map_batch(spec, mesh.points, tol)
    directions = images / np.linalg.norm(images, axis=1, keepdims=True)
    return float(np.max(np.abs(np.linalg.norm(images, axis=1) - mesh.radius_along(directions))))


# ---------- heteroclinic cycle ----------
class HeteroclinicReport(BaseModel):
    present: bool
    attracting: Optional[bool] = None
    vartheta: float
    planar_fixed_points: int
    permutation: Optional[List[int]] = None


def heteroclinic_cycle_check(spec: ModelSpec, tol: float = DEFAULT_TOL) -> HeteroclinicReport:
    perm = is_class_27(spec)
    inv = compute_invariants(spec)
    n_planar = len(planar_fixed_points(spec, tol))
    present = perm is not None and n_planar == 0
    attracting = None
    if present and inv.vartheta != 0:
        attracting = inv.vartheta < 0
    return HeteroclinicReport(present=present, attracting=attracting, vartheta=inv.vartheta,
                              planar_fixed_points=n_planar,
                              permutation=[p + 1 for p in perm] if perm is not None else None)


# ---------- portraits ----------
def portrait_initial_points(spec: ModelSpec, n_init: int, rng_seed: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    upper = 2.0 * float(np.max(spec.b / np.diag(spec.matrix)))
    return np.exp(rng.uniform(math.log(PORTRAIT_LOW), math.log(upper), size=(n_init, 3)))


def _portrait_chunk(spec: ModelSpec, X0: np.ndarray, k_max: int, stop_tol: float, tol: float) -> List[dict]:
    rows = []
    for trace in iterate_batch(spec, X0, k_max, stop_tol, tol):
        limit = trace.limit if trace.limit is not None else np.full(3, np.nan)
        final = trace.points[-1]
        rows.append({
            "x0_1": trace.points[0][0], "x0_2": trace.points[0][1], "x0_3": trace.points[0][2],
            "fate": trace.fate.value,
            "limit_1": limit[0], "limit_2": limit[1], "limit_3": limit[2],
            "final_1": final[0], "final_2": final[1], "final_3": final[2],
            "iterations": trace.k,
            "min_coordinate": trace.min_coordinate,
            "curve_residual": trace.curve_residual,
        })
    return rows


def sample_portrait(spec: ModelSpec, n_init: int = 100, k_max: int = 5000, rng_seed: int = 0,
                    stop_tol: float = CONVERGED_TOL, tol: float = DEFAULT_TOL,
                    workers: int = 1, chunk_size: int = PORTRAIT_CHUNK) -> pd.DataFrame:
    """
    Fate of n_init sampled orbits, one row per trace (stable schema PORTRAIT_COLUMNS).
    ConvergedTo traces are labelled with the nearest census fixed point.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    X0 = portrait_initial_points(spec, n_init, rng_seed)
    chunks = [X0[i:i + chunk_size] for i in range(0, n_init, chunk_size)]

    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_portrait_chunk, repeat(spec), chunks, repeat(k_max),
                                  repeat(stop_tol), repeat(tol)))
    else:
        parts = [_portrait_chunk(spec, X, k_max, stop_tol, tol) for X in chunks]

    rows = [row for part in parts for row in part]
    census = fixed_point_census(spec, tol=tol)
    for i, row in enumerate(rows):
        row["trace"] = i
        row["limit_label"] = None
        if row["fate"] == Fate.CONVERGED.value:
            limit = np.array([row["limit_1"], row["limit_2"], row["limit_3"]])
            row["limit_label"] = nearest_label(limit, census, LIMIT_MATCH_RADIUS) or "unmatched"

    out = pd.DataFrame(rows, columns=PORTRAIT_COLUMNS)
    logger.info("portrait fates: %s", out["fate"].value_counts().to_dict())
    return out


def fate_counts(portrait: pd.DataFrame) -> pd.DataFrame:
    if portrait is None or portrait.empty:
        return pd.DataFrame(columns=["fate", "limit_label", "count"])
    return (
        portrait.fillna({"limit_label": "-"})
                .groupby(["fate", "limit_label"])["trace"]
                .count()
                .reset_index(name="count")
                .sort_values(["count", "fate"], ascending=[False, True])
                .reset_index(drop=True)
    )
