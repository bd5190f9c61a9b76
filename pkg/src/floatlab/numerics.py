"""Shared numerical kernels: quadrature rules, batched root search and ray bisection.

Everything here works on whole batches at once. A batch is a flat or
broadcastable numpy array and every member is solved independently, so a
per-direction (or per-slope) loop becomes a handful of vectorized passes.
"""
from __future__ import annotations

import collections
import logging
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

RootSearchResults = collections.namedtuple(
    "RootSearchResults",
    ["estimated_root", "objective_at_estimated_root", "num_iterations", "converged"],
)


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def composite_gauss(lo: float, hi: float, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(order)
    edges = np.linspace(lo, hi, panels + 1)
    width = np.diff(edges)
    nodes = (edges[:-1, None] + width[:, None] * x[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_gauss(lo: Sequence[float], hi: Sequence[float], panels: Sequence[int] | int,
                 order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor product of composite Gauss rules over an axis-aligned box."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.isscalar(panels):
        panels = [int(panels)] * lo.size
    axes = [composite_gauss(l, h, p, order) for l, h, p in zip(lo, hi, panels)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, wts


def circle_nodes(m: int, phase: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Equally spaced angles with trapezoid weights; spectrally accurate for periodic integrands."""
    angles = 2.0 * np.pi * (np.arange(m) + phase) / m
    return angles, np.full(m, 2.0 * np.pi / m)


def sphere_nodes(n_polar: int, n_azimuth: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product rule on S^2: Gauss-Legendre in cos(polar angle), trapezoid in azimuth."""
    z, wz = gauss_legendre(n_polar)
    z = 2.0 * z - 1.0
    wz = 2.0 * wz
    phi, wphi = circle_nodes(n_azimuth)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    rho = np.sqrt(np.clip(1.0 - zz ** 2, 0.0, None))
    dirs = np.stack([rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1).reshape(-1, 3)
    weights = (wz[:, None] * wphi[None, :]).ravel()
    return dirs, weights


def ray_bisect(contains: Callable[[np.ndarray], np.ndarray], origins: np.ndarray,
               dirs: np.ndarray, t_max: np.ndarray | float, iters: int = 50) -> np.ndarray:
    """Largest t in [0, t_max] with origin + t*dir inside a convex set.

    `origins` must be inside; `origins + t_max*dirs` is expected outside.
    Shapes broadcast over the leading axes, the last axis is the coordinate.
    """
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    shape = np.broadcast_shapes(origins.shape, dirs.shape)[:-1]
    lo = np.zeros(shape)
    hi = np.broadcast_to(np.asarray(t_max, dtype=float), shape).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = contains(origins + mid[..., None] * dirs)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo


def batched_root_search(objective: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        lo: np.ndarray, hi: np.ndarray,
                        f_lo: np.ndarray, f_hi: np.ndarray,
                        xtol: np.ndarray | float, ftol: np.ndarray | float,
                        max_iter: int = 100, method: str = "illinois") -> RootSearchResults:
    """Bracketed root search for a batch of monotone scalar problems.

    `objective(x, idx)` evaluates members `idx` at positions `x`. Each bracket
    must satisfy f_lo * f_hi <= 0. `method` is "illinois" (modified regula
    falsi) or "bisect".
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    fa = np.asarray(f_lo, dtype=float).copy()
    fb = np.asarray(f_hi, dtype=float).copy()
    size = a.size
    xtol = np.broadcast_to(np.asarray(xtol, dtype=float), (size,))
    ftol = np.broadcast_to(np.asarray(ftol, dtype=float), (size,))
    if np.any(fa * fb > 0):
        raise ValueError("root is not bracketed")

    root = np.where(np.abs(fa) <= np.abs(fb), a, b)
    froot = np.where(np.abs(fa) <= np.abs(fb), fa, fb)
    converged = (np.abs(froot) <= ftol) | (np.abs(b - a) <= xtol)
    iterations = np.zeros(size, dtype=int)
    side = np.zeros(size, dtype=int)

    for _ in range(max_iter):
        idx = np.flatnonzero(~converged)
        if idx.size == 0:
            break
        ai, bi, fai, fbi = a[idx], b[idx], fa[idx], fb[idx]
        mid = 0.5 * (ai + bi)
        if method == "bisect":
            c = mid
        else:
            denom = fbi - fai
            with np.errstate(divide="ignore", invalid="ignore"):
                c = (ai * fbi - bi * fai) / denom
            bad = ~np.isfinite(c) | (c <= np.minimum(ai, bi)) | (c >= np.maximum(ai, bi))
            c = np.where(bad, mid, c)
        fc = np.asarray(objective(c, idx), dtype=float)
        iterations[idx] += 1

        same_as_a = np.sign(fc) == np.sign(fai)
        # c replaces a
        new_side = np.where(same_as_a, 1, -1)
        halve_b = same_as_a & (side[idx] == 1)
        halve_a = ~same_as_a & (side[idx] == -1)
        a[idx] = np.where(same_as_a, c, ai)
        fa[idx] = np.where(same_as_a, fc, np.where(halve_a, 0.5 * fai, fai))
        b[idx] = np.where(same_as_a, bi, c)
        fb[idx] = np.where(same_as_a, np.where(halve_b, 0.5 * fbi, fbi), fc)
        side[idx] = new_side

        root[idx] = c
        froot[idx] = fc
        converged[idx] = (np.abs(fc) <= ftol[idx]) | (np.abs(b[idx] - a[idx]) <= xtol[idx]) | (fc == 0)

    if not np.all(converged):
        log.debug("root search stopped with %d unconverged members", int(np.sum(~converged)))
    return RootSearchResults(root, froot, iterations, converged)


def batched_golden(fn: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                   iters: int = 80, maximize: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Golden-section search for a batch of unimodal problems on [lo, hi]."""
    sign = 1.0 if maximize else -1.0
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    c = b - ratio * (b - a)
    d = a + ratio * (b - a)
    fc = sign * fn(c)
    fd = sign * fn(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - ratio * (b - a)
        new_d = a + ratio * (b - a)
        trial = np.where(left, new_c, new_d)
        fp = sign * fn(trial)
        d, fd, c, fc = (np.where(left, c, new_d), np.where(left, fc, fp),
                        np.where(left, new_c, d), np.where(left, fp, fd))
    x = 0.5 * (a + b)
    fx = fn(x)
    # endpoints can win for monotone objectives
    f_lo, f_hi = fn(np.asarray(lo, dtype=float)), fn(np.asarray(hi, dtype=float))
    best_x, best_f = x, fx
    for cand_x, cand_f in ((np.asarray(lo, dtype=float), f_lo), (np.asarray(hi, dtype=float), f_hi)):
        better = sign * cand_f > sign * best_f
        best_x = np.where(better, cand_x, best_x)
        best_f = np.where(better, cand_f, best_f)
    return best_x, best_f
