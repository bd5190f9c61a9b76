"""Weighted floating bodies K^Phi_delta.

For every direction u of a grid the offset a_delta(u) is chosen so that the
cap {<y,u> >= a} carries weighted mass delta; the floating body is then
approximated from outside by the intersection of the kept halfspaces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.floatlab.errors import GeometryError
from src.floatlab.geometry_core import (
    ConvexBodySpec,
    Halfspace,
    QuadratureSpec,
    body_volume,
    cap_masses,
    cap_moments,
    halfspace_intersection,
    order_polygon,
    polygon_area,
    slice_moments,
    total_mass,
)
from src.floatlab.numerics import batched_root_search
from src.floatlab.utils import normalize_rows, run_concurrently
from src.floatlab.weights import WeightSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    dim: int
    directions: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if U.shape[1] != self.dim:
            raise ValueError("direction grid dimension mismatch")
        if np.abs(np.linalg.norm(U, axis=1) - 1.0).max() > 1e-12:
            raise ValueError("grid directions must be unit vectors")
        if len(U) < 2 * self.dim:
            raise ValueError("direction grid needs at least 2*dim directions")
        if len(np.unique(np.round(U, 12), axis=0)) != len(U):
            raise ValueError("grid directions must be pairwise distinct")
        object.__setattr__(self, "directions", U)

    @property
    def count(self) -> int:
        return len(self.directions)

    @classmethod
    def uniform(cls, dim: int, m: int, seed: int = 0) -> "DirectionGrid":
        """Equal angles in 2-D, a Fibonacci sphere in 3-D, Gaussian directions above."""
        if dim == 2:
            ang = 2.0 * np.pi * np.arange(m) / m
            return cls(2, np.stack([np.cos(ang), np.sin(ang)], axis=-1))
        if dim == 3:
            i = np.arange(m) + 0.5
            z = 1.0 - 2.0 * i / m
            phi = np.pi * (1.0 + 5 ** 0.5) * i
            r = np.sqrt(1.0 - z * z)
            return cls(3, np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1))
        rng = np.random.Generator(np.random.Philox(seed))
        return cls(dim, normalize_rows(rng.standard_normal((m, dim))))


@dataclass(frozen=True, eq=False)
class FloatingBodyApprox:
    body: ConvexBodySpec
    delta: float
    weight: WeightSpec
    grid: DirectionGrid
    offsets: np.ndarray
    polytope: Optional[ConvexBodySpec]
    touching: np.ndarray
    volume: float
    volume_error: float

    @property
    def vertices(self) -> np.ndarray:
        if self.polytope is None:
            raise GeometryError("no vertex representation above dimension 3")
        return self.polytope.vertices

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cut_ok = np.all(x @ self.grid.directions.T <= self.offsets + tol, axis=-1)
        return cut_ok & self.body.contains(x, tol=tol)

    def halfspaces(self) -> list[Halfspace]:
        return [Halfspace(u, a) for u, a in zip(self.grid.directions, self.offsets)]


def _solve_offsets(body: ConvexBodySpec, U: np.ndarray, w: WeightSpec, delta: float,
                   quad: QuadratureSpec, full_mass: float, method: str = "illinois") -> np.ndarray:
    h_top, _ = body.support_points(U)
    h_neg, _ = body.support_points(-U)
    h_bot = -h_neg
    power = 2.0 / (body.dim + 1)
    target = delta ** power

    def objective(a, idx):
        return cap_masses(body, U[idx], a, w, quad) ** power - target

    f_lo = np.full(len(U), full_mass ** power - target)
    f_hi = np.full(len(U), -target)
    res = batched_root_search(objective, h_bot, h_top, f_lo, f_hi,
                              xtol=1e-12 * (h_top - h_bot),
                              ftol=power * target * quad.rel_tol, method=method)
    log.debug("offsets solved m=%d iters=%d unconverged=%d", len(U),
              int(res.num_iterations.max(initial=0)), int(np.sum(~res.converged)))
    return np.minimum(res.estimated_root, h_top)


def solve_offsets(body: ConvexBodySpec, U: np.ndarray, w: WeightSpec, delta: float,
                  quad: QuadratureSpec, max_workers: int = 1, method: str = "illinois") -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if delta < 0:
        raise GeometryError("delta must be >= 0")
    full_mass = total_mass(body, w, quad)
    if delta >= full_mass:
        raise GeometryError("delta too large")
    if delta == 0:
        return body.support_points(U)[0]
    chunks = np.array_split(np.arange(len(U)), max(1, min(max_workers, len(U))))
    parts = run_concurrently(
        [lambda ix=ix: _solve_offsets(body, U[ix], w, delta, quad, full_mass, method) for ix in chunks],
        max_workers,
    )
    return np.concatenate(parts)


def cap_offset_for_mass(body: ConvexBodySpec, u, w: WeightSpec, delta: float,
                        quad: QuadratureSpec | None = None) -> float:
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return float(solve_offsets(body, u[None, :], w, delta, quad or QuadratureSpec())[0])


def touching_points(body: ConvexBodySpec, U: np.ndarray, offsets: np.ndarray, w: WeightSpec,
                    quad: QuadratureSpec) -> np.ndarray:
    """Phi-barycenters of the slices K cap {<y,u> = a}; each lies on the floating body boundary."""
    if body.dim not in (2, 3):
        raise GeometryError("touching points need dimension 2 or 3")
    mass, moment = slice_moments(body, U, offsets, w, quad)
    _, top = body.support_points(U)
    safe = mass > 0
    out = np.where(safe[:, None], moment / np.where(safe, mass, 1.0)[:, None], top)
    return out


def weighted_floating_body(body: ConvexBodySpec, w: WeightSpec, delta: float, grid: DirectionGrid,
                           quad: QuadratureSpec | None = None, max_workers: int = 1) -> FloatingBodyApprox:
    quad = quad or QuadratureSpec()
    if grid.dim != body.dim:
        raise ValueError("direction grid and body differ in dimension")
    U = grid.directions
    offsets = solve_offsets(body, U, w, delta, quad, max_workers=max_workers)

    if body.dim > 3:
        volume, err = _mc_floating_volume(body, U, offsets, quad)
        return FloatingBodyApprox(body, delta, w, grid, offsets, None, np.empty((0, body.dim)), volume, err)

    lo, hi = body.bbox
    pad = 0.01 * (hi - lo) + 1e-9
    try:
        poly = halfspace_intersection(U, offsets, body.dim, (lo - pad, hi + pad))
    except GeometryError:
        raise GeometryError("floating body empty at this delta")
    touch = touching_points(body, U, offsets, w, quad)
    if body.dim == 2:
        outer = polygon_area(order_polygon(poly.vertices))
        inner = polygon_area(order_polygon(touch))
        volume = (2.0 * outer + inner) / 3.0
        err = abs(outer - volume)
    else:
        outer = body_volume(poly)
        try:
            inner = body_volume(ConvexBodySpec.vpolytope(touch))
        except GeometryError:
            inner = outer
        volume, err = outer, abs(outer - inner)
    log.info("floating body %s delta=%.3g m=%d volume=%.10g err=%.2g",
             body.label, delta, grid.count, volume, err)
    return FloatingBodyApprox(body, delta, w, grid, offsets, poly, touch, volume, err)


def _mc_floating_volume(body, U, offsets, quad):
    lo, hi = body.bbox
    rng = np.random.Generator(np.random.Philox(quad.seed))
    pts = lo + (hi - lo) * rng.random((quad.samples, body.dim))
    inside = body.contains(pts) & np.all(pts @ U.T <= offsets, axis=1)
    box = float(np.prod(hi - lo))
    hits = inside.astype(float)
    return box * hits.mean(), box * hits.std() / np.sqrt(max(quad.samples - 1, 1))


def phi_barycenter(body: ConvexBodySpec, cut: Halfspace, w: WeightSpec,
                   quad: QuadratureSpec | None = None) -> np.ndarray:
    quad = quad or QuadratureSpec()
    mass, moment, _ = cap_moments(body, cut.normal[None, :], np.array([cut.offset]), w, quad)
    if not mass[0] > 0:
        raise GeometryError("zero-mass cap has no barycenter")
    return moment[0] / mass[0]
