"""Weighted floating functions psi^Phi_delta of convex functions.

The floating epigraph is kept in slope/offset form: for every slope v the
affine function l_v(x) = <v,x> - c(v) cuts weighted mass delta off epi(psi).
Cuts are parametrized by their depth D = psi*(v) - c >= 0, the height of
l_v above psi at the touching point of the parallel tangent.
"""
from __future__ import annotations

import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import CloughTocher2DInterpolator, PchipInterpolator
from scipy.optimize import linprog, minimize, minimize_scalar
from scipy.spatial import ConvexHull, Delaunay

from src.floatlab.errors import GeometryError, NumericalError
from src.floatlab.geometry_core import (
    ConvexBodySpec,
    QuadratureSpec,
    ball_volume,
    finite_difference_hessian,
    gauge_oracles,
    sphere_area,
)
from src.floatlab.numerics import (
    batched_golden,
    batched_root_search,
    circle_nodes,
    composite_gauss,
    ray_bisect,
    tensor_gauss,
)
from src.floatlab.utils import run_concurrently
from src.floatlab.weights import WeightSpec, segment_mass

log = logging.getLogger(__name__)

FUNCTION_KINDS = ("quadratic", "gauge_square", "piecewise_affine", "custom")
DeficitIntegrals = namedtuple("DeficitIntegrals", ["i_f", "i_psi", "tail_bound"])


@dataclass(frozen=True, eq=False)
class ConvexFunctionSpec:
    """A convex psi on R^n with e^{-psi} integrable.

    `alpha`, `beta` certify coercivity: psi(x) >= alpha*|x| - beta.
    """
    dim: int
    kind: str
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    alpha: float = 1.0
    beta: float = 0.0
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: float = 0.0
    body: Optional[ConvexBodySpec] = None
    pieces: Optional[np.ndarray] = None
    intercepts: Optional[np.ndarray] = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FUNCTION_KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("coercivity certificate needs alpha > 0")

    # -- constructors -------------------------------------------------------------
    @classmethod
    def quadratic(cls, A, b=None, c: float = 0.0, label: str = "", kind: str = "quadratic",
                  body: Optional[ConvexBodySpec] = None) -> "ConvexFunctionSpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or np.abs(A - A.T).max() > 1e-12:
            raise ValueError("quadratic form must be a symmetric matrix")
        eig = np.linalg.eigvalsh(A)
        if eig.min() < -1e-10:
            raise ValueError("quadratic form must be positive semidefinite")
        if eig.min() <= 1e-12:
            raise ValueError("e^{-psi} is not integrable for a singular quadratic form")
        b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        nb = float(np.linalg.norm(b))
        beta = (nb + 1.0) ** 2 / (2.0 * eig.min()) - c

        def value(x):
            return 0.5 * np.einsum("...i,ij,...j->...", x, A, x) + x @ b + c

        def grad(x):
            return x @ A + b

        def hess(x):
            return np.broadcast_to(A, np.shape(x)[:-1] + A.shape)

        return cls(dim=n, kind=kind, value_fn=value, grad_fn=grad, hess_fn=hess, alpha=1.0,
                   beta=max(beta, 0.0), A=A, b=b, c=float(c), body=body,
                   label=label or f"quadratic(n={n})")

    @classmethod
    def gauge_square(cls, body: ConvexBodySpec, label: str = "") -> "ConvexFunctionSpec":
        if body.kind in ("ball", "ellipsoid"):
            M = body.radius * np.eye(body.dim) if body.kind == "ball" else body.frame * body.semi_axes
            Minv = np.linalg.inv(M)
            if np.abs(body.center).max() > 1e-12:
                raise GeometryError("gauge requires a body centered at the origin")
            return cls.quadratic(Minv.T @ Minv, kind="gauge_square", body=body,
                                 label=label or f"gauge_square[{body.label}]")
        gauge, ggrad, ghess = gauge_oracles(body)
        radius = float(np.max(np.abs(np.stack(body.bbox)))) * np.sqrt(body.dim)

        def value(x):
            return 0.5 * gauge(x) ** 2

        def grad(x):
            return gauge(x)[..., None] * ggrad(x)

        def hess(x):
            g = ggrad(x)
            return g[..., :, None] * g[..., None, :] + gauge(x)[..., None, None] * ghess(x)

        return cls(dim=body.dim, kind="gauge_square", value_fn=value, grad_fn=grad, hess_fn=hess,
                   alpha=1.0, beta=radius ** 2 / 2.0, body=body,
                   label=label or f"gauge_square[{body.label}]")

    @classmethod
    def piecewise_affine(cls, slopes, intercepts, label: str = "") -> "ConvexFunctionSpec":
        V = np.atleast_2d(np.asarray(slopes, dtype=float))
        if V.shape[0] == 1 and np.ndim(slopes) == 1:
            V = V.T
        ci = np.asarray(intercepts, dtype=float).ravel()
        n = V.shape[1]
        if n == 1:
            alpha = min(V.max(), -V.min())
        else:
            hull = ConvexHull(V)
            alpha = float(np.min(-hull.equations[:, -1]))
        if not alpha > 0:
            raise ValueError("e^{-psi} is not integrable: 0 is not interior to the slope hull")

        def value(x):
            return np.max(x @ V.T + ci, axis=-1)

        def grad(x):
            return V[np.argmax(x @ V.T + ci, axis=-1)]

        def hess(x):
            return np.zeros(np.shape(x) + (n,))

        return cls(dim=n, kind="piecewise_affine", value_fn=value, grad_fn=grad, hess_fn=hess,
                   alpha=float(alpha), beta=max(0.0, -float(ci.min())), pieces=V, intercepts=ci,
                   label=label or f"max-affine({len(V)})")

    @classmethod
    def custom(cls, dim: int, value, grad, hess=None, alpha: float = 1.0, beta: float = 0.0,
               label: str = "custom") -> "ConvexFunctionSpec":
        spec = cls(dim=dim, kind="custom", value_fn=value, grad_fn=grad, hess_fn=hess,
                   alpha=alpha, beta=beta, label=label)
        spec.check_convexity()
        return spec

    # -- oracles ------------------------------------------------------------------
    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.value_fn(x.reshape(-1, self.dim))).reshape(x.shape[:-1])

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.grad_fn(x.reshape(-1, self.dim))).reshape(x.shape)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.dim)
        if self.hess_fn is not None:
            H = np.asarray(self.hess_fn(flat))
        else:
            H = finite_difference_hessian(self.grad_fn, flat)
        return H.reshape(x.shape + (self.dim,))

    def check_convexity(self, pairs: int = 256, seed: int = 0, tol: float = 1e-9) -> None:
        rng = np.random.Generator(np.random.Philox(seed))
        R = (self.beta + 4.0) / self.alpha
        x = rng.uniform(-R, R, (pairs, self.dim))
        y = rng.uniform(-R, R, (pairs, self.dim))
        mid = self.value(0.5 * (x + y))
        avg = 0.5 * (self.value(x) + self.value(y))
        if np.any(mid > avg + tol * (1.0 + np.abs(avg))):
            raise ValueError("function fails the midpoint convexity check")

    @cached_property
    def minimizer(self) -> np.ndarray:
        return self.conjugate_argmin(np.zeros((1, self.dim)))[0]

    @cached_property
    def min_value(self) -> float:
        return float(self.value(self.minimizer))

    def conjugate_argmin(self, V: np.ndarray) -> np.ndarray:
        """x*(v) = argmin_x psi(x) - <v,x> for rows of V."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if self.A is not None:
            return np.linalg.solve(self.A, (V - self.b).T).T
        if self.kind == "gauge_square":
            h, y = self.body.support_points(_safe_unit(V))
            norms = np.linalg.norm(V, axis=1)
            return (h * norms)[:, None] * y
        if self.kind == "piecewise_affine":
            return np.array([self._lp_argmin(v) for v in V])
        return self._numeric_argmin(V)

    def conjugate(self, V: np.ndarray, X: Optional[np.ndarray] = None) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        X = self.conjugate_argmin(V) if X is None else X
        return np.sum(V * X, axis=1) - self.value(X)

    def _lp_argmin(self, v: np.ndarray) -> np.ndarray:
        n = self.dim
        cost = np.concatenate([-v, [1.0]])
        A_ub = np.hstack([self.pieces, -np.ones((len(self.pieces), 1))])
        res = linprog(cost, A_ub=A_ub, b_ub=-self.intercepts, bounds=[(None, None)] * (n + 1), method="highs")
        if res.status != 0:
            raise GeometryError("delta unreachable for slope")
        return res.x[:n]

    def _numeric_argmin(self, V: np.ndarray) -> np.ndarray:
        R = (self.beta + 1.0 + self.value(np.zeros(self.dim))) / self.alpha + 1.0
        R = R + np.linalg.norm(V, axis=1).max() * R / self.alpha
        if self.dim == 1:
            lo = np.full(len(V), -R)
            hi = np.full(len(V), R)
            x, _ = batched_golden(lambda t: self.value(t[:, None]) - V[:, 0] * t, lo, hi,
                                  iters=120, maximize=False)
            return x[:, None]
        out = []
        for v in V:
            res = minimize(lambda x: float(self.value(x) - v @ x), np.zeros(self.dim),
                           jac=lambda x: self.grad(x) - v, method="BFGS")
            out.append(res.x)
        return np.array(out)

    def sublevel_box(self, T: float) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing {psi <= min psi + T}."""
        level = self.min_value + T
        n = self.dim
        if self.A is not None:
            half = np.sqrt(2.0 * T * np.diag(np.linalg.inv(self.A)))
            return self.minimizer - half, self.minimizer + half
        if self.kind == "gauge_square":
            lo, hi = self.body.bbox
            scale = np.sqrt(2.0 * level)
            return scale * lo, scale * hi
        if self.kind == "piecewise_affine":
            lo, hi = np.empty(n), np.empty(n)
            for i in range(n):
                for sgn in (1.0, -1.0):
                    cvec = np.zeros(n)
                    cvec[i] = -sgn
                    res = linprog(cvec, A_ub=self.pieces, b_ub=level - self.intercepts,
                                  bounds=[(None, None)] * n, method="highs")
                    if res.status != 0:
                        raise GeometryError(f"sublevel box of {self.label}: {res.message}")
                    if sgn > 0:
                        hi[i] = res.x[i]
                    else:
                        lo[i] = res.x[i]
            return lo, hi
        R = (level + self.beta) / self.alpha
        lo, hi = np.full(n, -R), np.full(n, R)
        for i in range(n):
            for sgn in (1.0, -1.0):
                res = minimize(lambda x: -sgn * x[i], self.minimizer, method="SLSQP",
                               constraints=[{"type": "ineq", "fun": lambda x: level - float(self.value(x))}])
                if res.success:
                    if sgn > 0:
                        hi[i] = min(hi[i], res.x[i] + 1e-6 * R)
                    else:
                        lo[i] = max(lo[i], res.x[i] - 1e-6 * R)
        return lo, hi


def _safe_unit(V: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    fallback = np.zeros_like(V)
    fallback[:, 0] = 1.0
    return np.where(norms > 0, V / np.where(norms > 0, norms, 1.0), fallback)


# -- cut integrals --------------------------------------------------------------------------

@dataclass(frozen=True)
class CutRule:
    order: int = 8
    panels: int = 12
    angles: int = 48
    radial_panels: int = 4

    @classmethod
    def from_quad(cls, quad: QuadratureSpec) -> "CutRule":
        return cls(order=8, panels=max(4, quad.points // 4), angles=quad.angles,
                   radial_panels=max(2, quad.points // 12))


def _region_extent(psi: ConvexFunctionSpec, V, D, X, conj, dirs, w: WeightSpec, cap: float) -> np.ndarray:
    """Distance from x*(v) along each direction to the boundary of {psi <= l_v}.

    V, X: (k, n); D, conj: (k,); dirs: (q, n). Returns (k, q).
    """
    k = len(D)
    if psi.A is not None:
        quad_form = np.einsum("qi,ij,qj->q", dirs, psi.A, dirs)
        return np.sqrt(2.0 * np.maximum(D, 0.0)[:, None] / quad_form[None, :])
    c = conj - D
    if psi.kind == "piecewise_affine":
        G = psi.pieces[None, :, :] - V[:, None, :]                        # (k, p, n)
        h = -c[:, None] - psi.intercepts[None, :] - np.einsum("kpn,kn->kp", G, X)
        rate = np.einsum("kpn,qn->kqp", G, dirs)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where(rate > 1e-15, np.maximum(h, 0.0)[:, None, :] / rate, np.inf)
        r = cand.min(axis=-1)
    else:
        def inside(pts):
            vv = np.broadcast_to(V[:, None, :], pts.shape)
            lvl = np.sum(vv * pts, axis=-1) - c[:, None]
            return psi.value(pts) <= lvl

        origins = np.broadcast_to(X[:, None, :], (k, len(dirs), psi.dim))
        dd = np.broadcast_to(dirs[None, :, :], origins.shape)
        t_hi = np.ones((k, len(dirs)))
        for _ in range(64):
            out = inside(origins + t_hi[..., None] * dd)
            if not out.any():
                break
            t_hi = np.where(out, 2.0 * t_hi, t_hi)
        if out.any():
            t_hi = np.where(out, np.inf, t_hi)
        finite = np.isfinite(t_hi)
        r = np.full(t_hi.shape, np.inf)
        r_fin = ray_bisect(inside, origins, dd, np.where(finite, t_hi, 1.0), iters=55)
        r = np.where(finite, r_fin, r)
    if np.any(~np.isfinite(r)):
        if w.kind != "exponential_height":
            raise GeometryError("infinite cut mass")
        r = np.minimum(r, cap)
    return r


def _cut_integrals(psi: ConvexFunctionSpec, w: WeightSpec, V, D, X, conj, rule: CutRule,
                   cap: float, moments: bool = False):
    """Cut masses; with `moments` also the Phi-mass and first moment of the cutting slice."""
    n = psi.dim
    c = conj - D
    if n == 1:
        dirs = np.array([[-1.0], [1.0]])
        dw = np.ones(2)
        s, ws = composite_gauss(0.0, 1.0, rule.panels, rule.order)
        jac_power = 0
    elif n == 2:
        ang, dw = circle_nodes(rule.angles)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        s, ws = composite_gauss(0.0, 1.0, rule.radial_panels, rule.order)
        jac_power = 1
    else:
        raise GeometryError("floating functions support n = 1 and n = 2")
    r = _region_extent(psi, V, D, X, conj, dirs, w, cap)              # (k, q)
    t = r[..., None] * s                                                # (k, q, p)
    pts = X[:, None, None, :] + t[..., None] * dirs[None, :, None, :]
    lvl = np.einsum("kn,kqpn->kqp", V, pts) - c[:, None, None]
    psi_vals = psi.value(pts)
    mass_density = segment_mass(w, pts, psi_vals, np.maximum(psi_vals, lvl))
    jac = (r[..., None] * ws) * (t ** jac_power) * dw[None, :, None]
    mass = np.sum(mass_density * jac, axis=(1, 2))
    if not moments:
        return mass
    slice_w = w.evaluate(np.concatenate([pts, lvl[..., None]], axis=-1)) * jac
    slice_mass = slice_w.sum(axis=(1, 2))
    slice_moment = np.einsum("kqp,kqpn->kn", slice_w, pts)
    return mass, slice_mass, slice_moment


def _truncation_cap(psi: ConvexFunctionSpec, T: float) -> float:
    lo, hi = psi.sublevel_box(T)
    return float(np.linalg.norm(hi - lo))


def cut_mass(psi: ConvexFunctionSpec, v, c: float, w: WeightSpec,
             quad: QuadratureSpec | None = None, truncation: float = 40.0) -> float:
    quad = quad or QuadratureSpec()
    V = np.atleast_2d(np.asarray(v, dtype=float)).reshape(1, psi.dim)
    X = psi.conjugate_argmin(V)
    conj = psi.conjugate(V, X)
    D = conj - c
    if D[0] <= 0:
        return 0.0
    return float(_cut_integrals(psi, w, V, D, X, conj, CutRule.from_quad(quad),
                                _truncation_cap(psi, truncation))[0])


def _solve_depths(psi, w, V, X, conj, delta, rule, cap, rel_tol) -> np.ndarray:
    k = len(V)
    power = 2.0 / (psi.dim + 2)
    target = delta ** power

    def mass(D, idx):
        return _cut_integrals(psi, w, V[idx], D, X[idx], conj[idx], rule, cap)

    hi = np.ones(k)
    m_hi = np.zeros(k)
    pending = np.arange(k)
    for _ in range(60):
        m_hi[pending] = mass(hi[pending], pending)
        short = m_hi[pending] < delta
        if not short.any():
            break
        pending = pending[short]
        hi[pending] *= 4.0
    else:
        raise GeometryError("delta unreachable for slope")

    res = batched_root_search(lambda D, idx: target - mass(D, idx) ** power,
                              np.zeros(k), hi, np.full(k, target), target - m_hi ** power,
                              xtol=1e-13 * hi, ftol=power * target * rel_tol)
    return res.estimated_root


def cut_offset_for_mass(psi: ConvexFunctionSpec, v, w: WeightSpec, delta: float,
                        quad: QuadratureSpec | None = None, truncation: float = 40.0) -> float:
    quad = quad or QuadratureSpec()
    if not delta > 0:
        raise ValueError("delta must be > 0")
    V = np.atleast_2d(np.asarray(v, dtype=float)).reshape(1, psi.dim)
    X = psi.conjugate_argmin(V)
    conj = psi.conjugate(V, X)
    D = _solve_depths(psi, w, V, X, conj, delta, CutRule.from_quad(quad),
                      _truncation_cap(psi, truncation), quad.rel_tol)
    return float(conj[0] - D[0])


# -- the floating function -------------------------------------------------------------------

def slope_grid(psi: ConvexFunctionSpec, per_axis: int, truncation: float = 40.0,
               shrink: float = 0.95, samples: int = 65) -> np.ndarray:
    """Uniform slopes inside the shrunk hull of gradients sampled on the truncation box."""
    lo, hi = psi.sublevel_box(truncation)
    if psi.kind == "piecewise_affine":
        G = psi.pieces
    else:
        axes = [np.linspace(l, h, samples) for l, h in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, psi.dim)
        G = psi.grad(grid)
    if psi.dim == 1:
        g_lo, g_hi = float(G.min()), float(G.max())
        mid = 0.5 * (g_lo + g_hi)
        half = 0.5 * shrink * (g_hi - g_lo)
        return np.linspace(mid - half, mid + half, per_axis)[:, None]
    hull = ConvexHull(G)
    verts = G[hull.vertices]
    center = verts.mean(axis=0)
    shrunk = center + shrink * (verts - center)
    axes = [np.linspace(a, b, per_axis) for a, b in zip(shrunk.min(axis=0), shrunk.max(axis=0))]
    cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, psi.dim)
    keep = Delaunay(shrunk).find_simplex(cand) >= 0
    return cand[keep]


@dataclass(frozen=True, eq=False)
class FloatingFunctionApprox:
    psi: ConvexFunctionSpec
    weight: WeightSpec
    delta: float
    slopes: np.ndarray
    offsets: np.ndarray
    depths: np.ndarray
    touching: np.ndarray
    gaps: np.ndarray

    def envelope(self, x) -> np.ndarray:
        """max(psi, max_v <v,x> - c(v)); a lower bound of the floating function."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.psi.dim)
        best = np.full(len(flat), -np.inf)
        step = max(1, 4_000_000 // max(len(self.slopes), 1))
        for i in range(0, len(flat), step):
            chunk = flat[i:i + step]
            best[i:i + step] = np.max(chunk @ self.slopes.T - self.offsets, axis=1)
        return np.maximum(self.psi.value(flat), best).reshape(x.shape[:-1])

    @cached_property
    def _gap_model(self):
        positive = bool(np.all(self.gaps > 0))
        vals = np.log(self.gaps) if positive else self.gaps
        if self.psi.dim == 1:
            xs, idx = np.unique(np.round(self.touching[:, 0], 13), return_index=True)
            if len(xs) < 2:
                return None
            return PchipInterpolator(xs, vals[idx], extrapolate=False), positive
        pts, idx = np.unique(np.round(self.touching, 13), axis=0, return_index=True)
        if len(pts) < 3:
            return None
        return CloughTocher2DInterpolator(pts, vals[idx]), positive

    def gap(self, x) -> np.ndarray:
        """Interpolated psi^Phi_delta - psi; nan outside the touching-point hull."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.psi.dim)
        model = self._gap_model
        if model is None:
            return np.full(x.shape[:-1], np.nan)
        interp, is_log = model
        vals = interp(flat[:, 0]) if self.psi.dim == 1 else interp(flat)
        vals = np.exp(vals) if is_log else vals
        return np.asarray(vals, dtype=float).reshape(x.shape[:-1])

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        env = self.envelope(x)
        base = self.psi.value(x)
        g = self.gap(x)
        return np.where(np.isfinite(g), np.maximum(base + np.maximum(g, 0.0), env), env)

    __call__ = evaluate

    def f_delta(self, x) -> np.ndarray:
        return np.exp(-self.evaluate(x))


def floating_function(psi: ConvexFunctionSpec, w: WeightSpec, delta: float, slopes: np.ndarray,
                      quad: QuadratureSpec | None = None, truncation: float = 40.0,
                      max_workers: int = 1) -> FloatingFunctionApprox:
    quad = quad or QuadratureSpec()
    if w.ambient_dim != psi.dim + 1:
        raise ValueError("weight must live on R^{n+1}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    V = np.atleast_2d(np.asarray(slopes, dtype=float)).reshape(-1, psi.dim)
    X = psi.conjugate_argmin(V)
    conj = psi.conjugate(V, X)
    rule = CutRule.from_quad(quad)
    cap = _truncation_cap(psi, truncation)

    if delta == 0:
        return FloatingFunctionApprox(psi, w, 0.0, V, conj, np.zeros(len(V)), X, np.zeros(len(V)))

    chunks = np.array_split(np.arange(len(V)), max(1, min(max_workers, len(V))))
    parts = run_concurrently(
        [lambda ix=ix: _solve_depths(psi, w, V[ix], X[ix], conj[ix], delta, rule, cap, quad.rel_tol)
         for ix in chunks],
        max_workers,
    )
    D = np.concatenate(parts)
    _, slice_mass, slice_moment = _cut_integrals(psi, w, V, D, X, conj, rule, cap, moments=True)
    touch = np.where(slice_mass[:, None] > 0, slice_moment / np.maximum(slice_mass, 1e-300)[:, None], X)
    offsets = conj - D
    gaps = np.maximum(np.sum(V * touch, axis=1) - offsets - psi.value(touch), 0.0)
    log.info("floating function %s delta=%.3g slopes=%d max_gap=%.3g", psi.label, delta, len(V),
             float(gaps.max(initial=0.0)))
    return FloatingFunctionApprox(psi, w, float(delta), V, offsets, D, touch, gaps)


def deficit_integrals(psi: ConvexFunctionSpec, approx: FloatingFunctionApprox,
                      quad: QuadratureSpec | None = None, truncation: float = 40.0,
                      panel_width: float = 0.5, order: int = 8) -> DeficitIntegrals:
    """I_f = int e^{-psi} - e^{-psi_delta} and I_psi = int (psi_delta - psi) e^{-psi}."""
    if approx.delta == 0:
        return DeficitIntegrals(0.0, 0.0, 0.0)
    lo, hi = psi.sublevel_box(truncation)
    panels = [max(4, int(math.ceil((h - l) / panel_width))) for l, h in zip(lo, hi)]
    pts, wts = tensor_gauss(lo, hi, panels, order)
    base = psi.value(pts)
    gap = np.maximum(approx.evaluate(pts) - base, 0.0)
    ef = np.exp(-base)
    i_f = float(np.sum(wts * -ef * np.expm1(-gap)))
    i_psi = float(np.sum(wts * gap * ef))
    n = psi.dim
    tail = (math.exp(-(psi.min_value + truncation) / 2.0 + psi.beta / 2.0)
            * sphere_area(n) * math.gamma(n) * (2.0 / psi.alpha) ** n)
    log.debug("deficits delta=%.3g I_f=%.6g I_psi=%.6g tail<=%.2g", approx.delta, i_f, i_psi, tail)
    return DeficitIntegrals(i_f, i_psi, tail)


# -- rolling functions and uniform bounds ----------------------------------------------------

def _has_kink(psi: ConvexFunctionSpec, x: np.ndarray) -> bool:
    if psi.kind == "piecewise_affine":
        vals = x @ psi.pieces.T + psi.intercepts
        return int(np.sum(vals >= vals.max() - 1e-12 * (1.0 + abs(vals.max())))) > 1
    eps = 1e-7 * max(1.0, float(np.linalg.norm(x)))
    for e in np.eye(psi.dim):
        if np.linalg.norm(psi.grad(x + eps * e) - psi.grad(x - eps * e)) > 1e-3:
            return True
    return False


def _ball_inside_epigraph(psi: ConvexFunctionSpec, x: np.ndarray, normal: np.ndarray, rho: float,
                          tol: float) -> bool:
    n = psi.dim
    z = np.concatenate([x, [float(psi.value(x))]])
    C = z + rho * normal
    cx, cy = C[:n], C[n]

    def margin(u):
        u = np.atleast_2d(u)
        d2 = np.sum((u - cx) ** 2, axis=-1)
        return cy - np.sqrt(np.clip(rho * rho - d2, 0.0, None)) - psi.value(u)

    if n == 1:
        u = cx[0] + rho * np.linspace(-1.0, 1.0, 2001)
        m = margin(u[:, None])
        j = int(np.argmin(m))
        lo, hi = u[max(j - 1, 0)], u[min(j + 1, len(u) - 1)]
        if hi > lo:
            res = minimize_scalar(lambda t: float(margin(np.array([[t]]))[0]), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            best = min(float(m[j]), float(res.fun))
        else:
            best = float(m[j])
        return best >= -tol
    ang = 2.0 * np.pi * np.arange(64) / 64
    rad = np.concatenate([[0.0], rho * np.geomspace(1e-4, 1.0, 60)])
    u = cx + (rad[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]).reshape(-1, 2)
    m = margin(u)
    j = int(np.argmin(m))
    res = minimize(lambda p: float(margin(p)[0]), u[j], method="L-BFGS-B",
                   bounds=[(cx[i] - rho, cx[i] + rho) for i in range(2)])
    best = min(float(m[j]), float(res.fun))
    return best >= -tol


def rolling_function(psi: ConvexFunctionSpec, x, search_tol: float = 1e-6, rho_max: float = 1e6) -> float:
    """Radius of the largest ball inside epi(psi) touching it at (x, psi(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    try:
        g = np.asarray(psi.grad(x), dtype=float)
    except (ArithmeticError, ValueError, NumericalError):
        return 0.0
    if not np.all(np.isfinite(g)) or _has_kink(psi, x):
        return 0.0
    normal = np.concatenate([-g, [1.0]]) / np.sqrt(1.0 + g @ g)
    tol = 1e-13 * (1.0 + abs(float(psi.value(x))))

    def feasible(rho):
        return _ball_inside_epigraph(psi, x, normal, rho, tol)

    if not feasible(search_tol):
        return 0.0
    lo, hi = search_tol, 1.0
    while feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > rho_max:
            return rho_max
    while hi - lo > search_tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def modified_rolling_value(r: float, value: float) -> float:
    if 0 <= r <= value:
        return r
    if r > value >= 0:
        return value
    if 0 <= r <= -value:
        return r
    # r > -value > 0
    return -value


def modified_rolling(psi: ConvexFunctionSpec, x, r: Optional[float] = None) -> float:
    r = rolling_function(psi, x) if r is None else r
    return modified_rolling_value(r, float(psi.value(np.atleast_1d(np.asarray(x, dtype=float)))))


def function_floating_constant(n: int) -> float:
    """c_{n+1} = ((n+2)/vol_n(B^n))^{2/(n+2)} / 2, the rate constant of floating functions on R^n."""
    return 0.5 * ((n + 2) / ball_volume(n)) ** (2.0 / (n + 2))


def pointwise_rate(psi: ConvexFunctionSpec, w: WeightSpec, x) -> float:
    """lim (psi_delta(x) - psi(x)) / delta^{2/(n+2)}."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = psi.dim
    det = max(float(np.linalg.det(psi.hessian(x))), 0.0)
    phi = float(w.evaluate(np.concatenate([x, [float(psi.value(x))]])))
    return function_floating_constant(n) * det ** (1.0 / (n + 2)) * phi ** (-2.0 / (n + 2))


def uniform_bound(psi: ConvexFunctionSpec, x, eta: float, r: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = psi.dim
    if not (eta > 0 and r > 0):
        return math.inf
    g = psi.grad(x)
    return (2.0 ** ((3 * n + 4) / (n + 2)) * function_floating_constant(n) * math.sqrt(1.0 + float(g @ g))
            / (eta ** (2.0 / (n + 2)) * r ** (n / (n + 2))))


def exponential_bound(psi: ConvexFunctionSpec, x, rho: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = psi.dim
    if not rho > 0:
        return math.inf
    g = psi.grad(x)
    val = float(psi.value(x))
    return (2.0 ** ((3 * n + 4) / (n + 2)) * function_floating_constant(n) * math.sqrt(1.0 + float(g @ g))
            * math.exp((2.0 * abs(val) + 4.0 * rho) / (n + 2)) / rho ** (n / (n + 2)))
