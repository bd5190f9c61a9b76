"""Convex bodies: representations, oracles, volumes and weighted cap masses.

Convention used across floatlab: a cut (u, a) removes the cap
{y : <y, u> >= a} and keeps {y : <y, u> <= a}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError
from scipy.special import betainc, gamma

from src.floatlab.errors import GeometryError, QuadratureError
from src.floatlab.numerics import (
    batched_golden,
    circle_nodes,
    composite_gauss,
    gauss_legendre,
    ray_bisect,
    sphere_nodes,
)
from src.floatlab.utils import as_points, normalize_rows
from src.floatlab.weights import WeightSpec

log = logging.getLogger(__name__)

BODY_KINDS = ("ball", "ellipsoid", "hpolytope", "vpolytope", "gauge")
QUAD_METHODS = ("exact-closed-form", "tensor-grid", "monte-carlo")
MEMBERSHIP_TOL = 1e-12


def ball_volume(n: int) -> float:
    """vol_n(B_2^n); vol_0 = 1."""
    return float(np.pi ** (n / 2.0) / gamma(n / 2.0 + 1.0))


def sphere_area(n: int) -> float:
    """(n-1)-dimensional measure of S^{n-1}; S^0 has two points."""
    return n * ball_volume(n)


@dataclass(frozen=True)
class Halfspace:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        u = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("halfspace normal must be a unit vector")
        object.__setattr__(self, "normal", u)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "exact-closed-form"
    points: int = 48
    angles: int = 48
    samples: int = 200_000
    seed: int = 0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in QUAD_METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.points < 2 or self.angles < 4:
            raise ValueError("quadrature needs points >= 2 and angles >= 4")
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")


@dataclass(frozen=True)
class BoundaryForm:
    """Defining function F of the boundary (F < 0 inside) with gradient and Hessian."""
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ConvexBodySpec:
    dim: int
    kind: str
    bbox: Tuple[np.ndarray, np.ndarray]
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    semi_axes: Optional[np.ndarray] = None
    frame: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    vertices: Optional[np.ndarray] = None
    gauge: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gauge_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gauge_hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    contains_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    support_fn: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None
    boundary: Optional[BoundaryForm] = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    # -- constructors -------------------------------------------------------------
    @classmethod
    def ball(cls, center, radius: float, label: str = "") -> "ConvexBodySpec":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise GeometryError("ball radius must be > 0")
        return cls(dim=c.size, kind="ball", center=c, radius=float(radius),
                   bbox=(c - radius, c + radius), label=label or f"ball(r={radius:g})")

    @classmethod
    def ellipsoid(cls, center, semi_axes, frame=None, label: str = "") -> "ConvexBodySpec":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        a = np.atleast_1d(np.asarray(semi_axes, dtype=float))
        if a.size != c.size:
            raise GeometryError("semi_axes and center differ in dimension")
        if np.any(a <= 0):
            raise GeometryError("all semi-axes must be > 0")
        F = np.eye(c.size) if frame is None else np.asarray(frame, dtype=float)
        if F.shape != (c.size, c.size) or np.abs(F.T @ F - np.eye(c.size)).max() > 1e-10:
            raise GeometryError("frame must be an orthonormal matrix")
        half = np.sqrt(np.sum((F * a[None, :]) ** 2, axis=1))
        return cls(dim=c.size, kind="ellipsoid", center=c, semi_axes=a, frame=F,
                   bbox=(c - half, c + half), label=label or f"ellipsoid{tuple(np.round(a, 6))}")

    @classmethod
    def hpolytope(cls, A, b, label: str = "") -> "ConvexBodySpec":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0) or b.size != A.shape[0]:
            raise GeometryError("malformed halfspace list")
        A, b = A / norms[:, None], b / norms
        dim = A.shape[1]
        center, r = _chebyshev_center(A, b)
        if r <= 1e-12:
            raise GeometryError("hpolytope has empty interior")
        lo, hi = np.empty(dim), np.empty(dim)
        for i in range(dim):
            for sgn in (1.0, -1.0):
                c = np.zeros(dim)
                c[i] = -sgn
                res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * dim, method="highs")
                if res.status == 3:
                    raise GeometryError("unbounded body")
                if sgn > 0:
                    hi[i] = res.x[i]
                else:
                    lo[i] = res.x[i]
        return cls(dim=dim, kind="hpolytope", A=A, b=b, center=center, bbox=(lo, hi),
                   label=label or f"hpolytope({A.shape[0]})")

    @classmethod
    def box(cls, lo, hi, label: str = "") -> "ConvexBodySpec":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        eye = np.eye(lo.size)
        return cls.hpolytope(np.vstack([eye, -eye]), np.concatenate([hi, -lo]), label=label or "box")

    @classmethod
    def vpolytope(cls, vertices, label: str = "") -> "ConvexBodySpec":
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        if V.shape[1] < 2:
            raise GeometryError("vpolytope needs dimension >= 2")
        try:
            hull = ConvexHull(V)
        except QhullError as exc:
            raise GeometryError(f"degenerate vpolytope: {exc}")
        V = V[hull.vertices]
        return cls(dim=V.shape[1], kind="vpolytope", vertices=V, center=V.mean(axis=0),
                   bbox=(V.min(axis=0), V.max(axis=0)), label=label or f"vpolytope({len(V)})")

    @classmethod
    def gauge_body(cls, gauge, bbox, gauge_grad=None, gauge_hessian=None, contains=None,
                   support=None, boundary=None, center=None, label: str = "", meta=None) -> "ConvexBodySpec":
        lo = np.atleast_1d(np.asarray(bbox[0], dtype=float))
        hi = np.atleast_1d(np.asarray(bbox[1], dtype=float))
        if np.any(hi <= lo):
            raise GeometryError("gauge body needs a finite bounding box")
        c = np.zeros(lo.size) if center is None else np.asarray(center, dtype=float)
        if boundary is None and gauge is not None and gauge_grad is not None:
            boundary = _gauge_boundary_form(gauge, gauge_grad, gauge_hessian, c)
        body = cls(dim=lo.size, kind="gauge", bbox=(lo, hi), center=c, gauge=gauge,
                   gauge_grad=gauge_grad, gauge_hessian=gauge_hessian, contains_fn=contains,
                   support_fn=support, boundary=boundary, label=label or "gauge", meta=meta or {})
        if not body.contains(c[None, :])[0]:
            raise GeometryError("interior point of gauge body is not inside the body")
        return body

    @classmethod
    def lp_ball(cls, p: float, scales, label: str = "") -> "ConvexBodySpec":
        """{x : sum |x_i/s_i|^p <= 1}, a smooth gauge body for p >= 2."""
        s = np.atleast_1d(np.asarray(scales, dtype=float))
        if p < 1 or np.any(s <= 0):
            raise GeometryError("lp ball needs p >= 1 and positive scales")
        if p == 2:
            return cls.ellipsoid(np.zeros(s.size), s, label=label or f"ellipsoid{tuple(s)}")

        def gauge(x):
            return np.sum(np.abs(x / s) ** p, axis=-1) ** (1.0 / p)

        def grad(x):
            g = gauge(x)[..., None]
            y = x / s
            with np.errstate(divide="ignore", invalid="ignore"):
                out = g ** (1.0 - p) * np.abs(y) ** (p - 1.0) * np.sign(y) / s
            return np.nan_to_num(out)

        def hess(x):
            g = gauge(x)[..., None, None]
            dg = grad(x)
            y = np.abs(x / s)
            with np.errstate(divide="ignore", invalid="ignore"):
                diag = np.einsum("...i,ij->...ij", g[..., 0] ** (2.0 - p) * y ** (p - 2.0) / s ** 2, np.eye(s.size))
                out = (p - 1.0) / g * (diag - dg[..., :, None] * dg[..., None, :])
            return np.nan_to_num(out)

        return cls.gauge_body(gauge, (-s, s), gauge_grad=grad, gauge_hessian=hess,
                              label=label or f"l{p:g}-ball{tuple(s)}", meta={"p": float(p), "scales": s})

    # -- oracles --------------------------------------------------------------------
    @cached_property
    def interior_point(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @cached_property
    def diameter_bound(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo)) * 1.01 + 1e-12

    @cached_property
    def _hull(self) -> ConvexHull:
        return ConvexHull(self.polytope_vertices)

    @cached_property
    def polytope_vertices(self) -> np.ndarray:
        if self.kind == "vpolytope":
            return self.vertices
        if self.kind == "hpolytope" and self.dim in (2, 3):
            lo, hi = self.bbox
            pad = 0.01 * (hi - lo) + 1e-9
            return halfspace_intersection(self.A, self.b, self.dim, (lo - pad, hi + pad)).vertices
        raise GeometryError("vertex representation unavailable for this body")

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius * (1.0 + tol)
        if self.kind == "ellipsoid":
            z = ((x - self.center) @ self.frame) / self.semi_axes
            return np.sum(z * z, axis=-1) <= 1.0 + tol
        if self.kind == "hpolytope":
            return np.all(x @ self.A.T <= self.b + tol * (1.0 + np.abs(self.b)), axis=-1)
        if self.kind == "vpolytope":
            eq = self._hull.equations
            return np.all(x @ eq[:, :-1].T + eq[:, -1] <= tol * (1.0 + np.abs(eq[:, -1])), axis=-1)
        if self.contains_fn is not None:
            return np.asarray(self.contains_fn(x), dtype=bool)
        lead = x.shape[:-1]
        vals = self.gauge(x.reshape(-1, self.dim) - self.center)
        return (np.asarray(vals) <= 1.0 + tol).reshape(lead)

    def support_points(self, U: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Batched support values h_K(u) and maximizers for rows of U."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if self.kind == "ball":
            return U @ self.center + self.radius, self.center + self.radius * U
        if self.kind == "ellipsoid":
            w = (U @ self.frame) * self.semi_axes
            nw = np.linalg.norm(w, axis=1)
            pts = self.center + ((w * self.semi_axes) / nw[:, None]) @ self.frame.T
            return U @ self.center + nw, pts
        if self.support_fn is not None:
            return self.support_fn(U)
        if self.kind in ("vpolytope", "hpolytope") and (self.kind == "vpolytope" or self.dim <= 3):
            V = self.polytope_vertices
            proj = U @ V.T
            j = np.argmax(proj, axis=1)
            return proj[np.arange(len(U)), j], V[j]
        if self.kind == "hpolytope":
            out = [_lp_support(self.A, self.b, u) for u in U]
            return np.array([o[0] for o in out]), np.array([o[1] for o in out])
        return _radial_support(self, U)

    def radial_extent(self, dirs: np.ndarray, origin: Optional[np.ndarray] = None,
                      iters: int = 55) -> np.ndarray:
        o = self.interior_point if origin is None else origin
        return ray_bisect(self.contains, o, dirs, self.diameter_bound, iters=iters)


# -- module level operations ---------------------------------------------------------

def support_value(body: ConvexBodySpec, u) -> float:
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    if body.kind == "hpolytope":
        return _lp_support(body.A, body.b, u)[0]
    h, _ = body.support_points(u[None, :])
    return float(h[0])


def membership(body: ConvexBodySpec, x) -> bool | np.ndarray:
    pts = as_points(x, body.dim)
    inside = body.contains(pts)
    return bool(inside[0]) if pts.shape[0] == 1 and np.ndim(x) <= 1 else inside


def body_volume(body: ConvexBodySpec, quad: QuadratureSpec | None = None) -> float:
    quad = quad or QuadratureSpec()
    n = body.dim
    if quad.method == "monte-carlo":
        return _mc_volume(body, quad)[0]
    if body.kind == "ball":
        return body.radius ** n * ball_volume(n)
    if body.kind == "ellipsoid":
        return float(np.prod(body.semi_axes)) * ball_volume(n)
    if body.kind in ("hpolytope", "vpolytope") and n == 2:
        return polygon_area(order_polygon(body.polytope_vertices))
    if body.kind in ("hpolytope", "vpolytope") and n == 3:
        return float(body._hull.volume)
    if n <= 3:
        return integrate_over_body(body, None, quad)
    return _mc_volume(body, quad)[0]


def _mc_volume(body: ConvexBodySpec, quad: QuadratureSpec) -> Tuple[float, float]:
    if quad.samples <= 0:
        raise ValueError("Monte Carlo sample count must be positive")
    lo, hi = body.bbox
    rng = np.random.Generator(np.random.Philox(quad.seed))
    pts = lo + (hi - lo) * rng.random((quad.samples, body.dim))
    hits = body.contains(pts).astype(float)
    box = float(np.prod(hi - lo))
    est = box * hits.mean()
    err = box * hits.std(ddof=1) / np.sqrt(quad.samples) if quad.samples > 1 else np.inf
    log.debug("mc volume %s est=%.6g err=%.2g", body.label, est, err)
    return est, err


def integrate_over_body(body: ConvexBodySpec, fn: Optional[Callable[[np.ndarray], np.ndarray]],
                        quad: QuadratureSpec | None = None, order: int = 24) -> float:
    """Integral of fn over K (fn=None means volume) in dims 1-3 by radial quadrature."""
    quad = quad or QuadratureSpec()
    n = body.dim
    if n == 1:
        h_hi, _ = body.support_points(np.array([[1.0]]))
        h_lo, _ = body.support_points(np.array([[-1.0]]))
        lo, hi = -float(h_lo[0]), float(h_hi[0])
        if fn is None:
            return hi - lo
        x, w = composite_gauss(lo, hi, 16, order)
        return float(np.sum(fn(x[:, None]) * w))
    origin = body.interior_point
    if n == 2:
        ang, wang = circle_nodes(max(256, 4 * quad.angles))
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    elif n == 3:
        dirs, wang = sphere_nodes(max(48, quad.angles), max(96, 2 * quad.angles))
    else:
        raise GeometryError("radial quadrature supports dims 1-3")
    rho = body.radial_extent(dirs, origin)
    if fn is None:
        return float(np.sum(rho ** n * wang) / n)
    t, wt = gauss_legendre(order)
    r = rho[:, None] * t[None, :]
    pts = origin + r[..., None] * dirs[:, None, :]
    vals = fn(pts.reshape(-1, n)).reshape(r.shape)
    return float(np.sum(wang * rho * np.sum(vals * r ** (n - 1) * wt, axis=1)))


# -- cap masses ------------------------------------------------------------------------

def cap_weighted_volume(body: ConvexBodySpec, cut: Halfspace, w: WeightSpec,
                        quad: QuadratureSpec | None = None) -> float:
    quad = quad or QuadratureSpec()
    if w.ambient_dim != body.dim:
        raise ValueError("weight is defined on a different ambient space")
    masses, errs = cap_masses(body, cut.normal[None, :], np.array([cut.offset]), w, quad,
                              with_error=True)
    mass, err = float(masses[0]), float(errs[0])
    if err > max(quad.abs_tol, quad.rel_tol * abs(mass)):
        raise QuadratureError("cap mass tolerance unachievable within sample budget", mass, err)
    return mass


def cap_masses(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray, w: WeightSpec,
               quad: QuadratureSpec, with_error: bool = False):
    masses, _, errs = cap_moments(body, U, A, w, quad, need_moments=False)
    return (masses, errs) if with_error else masses


def cap_moments(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray, w: WeightSpec,
                quad: QuadratureSpec, need_moments: bool = True):
    """Weighted masses and first moments of the caps {<y,u> >= a} for rows of U.

    Returns (masses (m,), moments (m, d) or None, error estimates (m,)).
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    A = np.asarray(A, dtype=float).ravel()
    zero_err = np.zeros(len(A))
    if quad.method == "monte-carlo" or body.dim > 3:
        return _mc_caps(body, U, A, w, quad)
    if quad.method == "exact-closed-form" and w.is_constant:
        if body.kind in ("ball", "ellipsoid"):
            m, mom = _ellipsoid_caps(body, U, A)
            eta = w.constant_value
            return eta * m, eta * mom, zero_err
        if body.kind in ("hpolytope", "vpolytope"):
            m, mom = _polytope_caps(body, U, A)
            eta = w.constant_value
            return eta * m, eta * mom, zero_err
    if body.dim == 1:
        return _interval_caps(body, U, A, w, quad)
    masses, moments = _slice_caps(body, U, A, w, quad, need_moments)
    return masses, moments, zero_err


def total_mass(body: ConvexBodySpec, w: WeightSpec, quad: QuadratureSpec) -> float:
    if w.is_constant and quad.method != "monte-carlo":
        return w.constant_value * body_volume(body, quad)
    u = np.zeros((1, body.dim))
    u[0, 0] = 1.0
    h_lo, _ = body.support_points(-u)
    return float(cap_masses(body, u, np.array([-h_lo[0] - 1.0]), w, quad)[0])


def _unit_ball_caps(d: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Volume and first moment (along the normal) of {z in B^n : <z,u> >= d}."""
    d = np.clip(d, -1.0, 1.0)
    vol_n = ball_volume(n)
    x = np.clip(1.0 - d * d, 0.0, 1.0)
    half = 0.5 * vol_n * betainc((n + 1) / 2.0, 0.5, x)
    vol = np.where(d >= 0, half, vol_n - half)
    moment = ball_volume(n - 1) * x ** ((n + 1) / 2.0) / (n + 1)
    return vol, moment


def _ellipsoid_caps(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray):
    n = body.dim
    if body.kind == "ball":
        M = body.radius * np.eye(n)
    else:
        M = body.frame * body.semi_axes[None, :]
    Mu = U @ M
    scale = np.linalg.norm(Mu, axis=1)
    d = (A - U @ body.center) / scale
    vol, mom = _unit_ball_caps(d, n)
    det = abs(np.linalg.det(M))
    uhat = Mu / scale[:, None]
    moments = det * (vol[:, None] * body.center + mom[:, None] * (uhat @ M.T))
    return det * vol, moments


def _interval_caps(body, U, A, w, quad):
    h_hi, _ = body.support_points(np.array([[1.0]]))
    h_lo, _ = body.support_points(np.array([[-1.0]]))
    lo, hi = -h_lo[0], h_hi[0]
    sgn = np.sign(U[:, 0])
    left = np.where(sgn > 0, np.maximum(A, lo), lo)
    right = np.where(sgn > 0, hi, np.minimum(-A, hi))
    right = np.maximum(left, right)
    t, wt = gauss_legendre(quad.points)
    x = left[:, None] + (right - left)[:, None] * t
    vals = w.evaluate(x[..., None]) * wt * (right - left)[:, None]
    return vals.sum(axis=1), np.sum(vals * x, axis=1)[:, None], np.zeros(len(A))


def _slice_caps(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray, w: WeightSpec,
                quad: QuadratureSpec, need_moments: bool):
    n = body.dim
    h_top, x_top = body.support_points(U)
    h_neg, x_bot = body.support_points(-U)
    h_bot = -h_neg
    a_eff = np.clip(A, h_bot, h_top)
    span = h_top - a_eff
    height = np.maximum(h_top - h_bot, 1e-300)

    sig, wsig = gauss_legendre(quad.points)
    t = a_eff[:, None] + span[:, None] * 0.5 * (1.0 - np.cos(np.pi * sig))
    dt = span[:, None] * 0.5 * np.pi * np.sin(np.pi * sig) * wsig
    lam = np.clip((t - h_bot[:, None]) / height[:, None], 0.0, 1.0)
    p = x_bot[:, None, :] + lam[..., None] * (x_top - x_bot)[:, None, :]

    if n == 2:
        mass, moment = _chord_integrals(body, U, p, w, quad, need_moments)
    else:
        mass, moment = _disk_integrals(body, U, p, w, quad, need_moments)
    masses = np.sum(mass * dt, axis=1)
    moments = np.sum(moment * dt[..., None], axis=1) if need_moments else None
    return masses, moments


def slice_moments(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray, w: WeightSpec,
                  quad: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(d-1)-dimensional weighted mass and first moment of the slices {<y,u> = a} of K."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    A = np.asarray(A, dtype=float).ravel()
    h_top, x_top = body.support_points(U)
    h_neg, x_bot = body.support_points(-U)
    h_bot = -h_neg
    lam = np.clip((A - h_bot) / np.maximum(h_top - h_bot, 1e-300), 0.0, 1.0)
    p = (x_bot + lam[:, None] * (x_top - x_bot))[:, None, :]
    if body.dim == 2:
        mass, moment = _chord_integrals(body, U, p, w, quad, True)
    elif body.dim == 3:
        mass, moment = _disk_integrals(body, U, p, w, quad, True)
    else:
        raise GeometryError("slice moments support dims 2 and 3")
    return mass[:, 0], moment[:, 0, :]


def _chord_integrals(body, U, p, w, quad, need_moments):
    perp = np.stack([-U[:, 1], U[:, 0]], axis=-1)[:, None, :]
    perp = np.broadcast_to(perp, p.shape)
    tp = ray_bisect(body.contains, p, perp, body.diameter_bound)
    tm = ray_bisect(body.contains, p, -perp, body.diameter_bound)
    if w.is_constant:
        eta = w.constant_value
        mass = eta * (tp + tm)
        moment = eta * ((tp + tm)[..., None] * p + 0.5 * (tp ** 2 - tm ** 2)[..., None] * perp) if need_moments else None
        return mass, moment
    s, ws = gauss_legendre(quad.points)
    tau = -tm[..., None] + (tp + tm)[..., None] * s
    pts = p[..., None, :] + tau[..., None] * perp[..., None, :]
    vals = w.evaluate(pts) * ws * (tp + tm)[..., None]
    mass = vals.sum(axis=-1)
    moment = np.sum(vals[..., None] * pts, axis=-2) if need_moments else None
    return mass, moment


def _plane_frames(U: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.where(np.abs(U[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = normalize_rows(np.cross(U, helper))
    e2 = np.cross(U, e1)
    return e1, e2


def _disk_integrals(body, U, p, w, quad, need_moments):
    e1, e2 = _plane_frames(U)
    phi, wphi = circle_nodes(quad.angles)
    dirs = (np.cos(phi)[None, :, None] * e1[:, None, :] + np.sin(phi)[None, :, None] * e2[:, None, :])
    dirs = dirs[:, None, :, :]                      # (m, 1, k, 3)
    origins = p[:, :, None, :]                      # (m, Nt, 1, 3)
    rho = ray_bisect(body.contains, origins, dirs, body.diameter_bound)   # (m, Nt, k)
    if w.is_constant:
        eta = w.constant_value
        area = 0.5 * np.sum(rho ** 2 * wphi, axis=-1)
        mass = eta * area
        moment = None
        if need_moments:
            moment = eta * (area[..., None] * p + np.sum((rho ** 3 / 3.0 * wphi)[..., None] * dirs, axis=-2))
        return mass, moment
    s, ws = gauss_legendre(max(8, quad.points // 3))
    r = rho[..., None] * s                          # (m, Nt, k, q)
    pts = origins[..., None, :] + r[..., None] * dirs[..., None, :]
    vals = w.evaluate(pts) * r * ws * rho[..., None] * wphi[:, None]
    mass = vals.sum(axis=(-1, -2))
    moment = np.sum(vals[..., None] * pts, axis=(-2, -3)) if need_moments else None
    return mass, moment


def _mc_caps(body, U, A, w, quad):
    lo, hi = body.bbox
    rng = np.random.Generator(np.random.Philox(quad.seed))
    box = float(np.prod(hi - lo))
    n_samples = quad.samples
    m = len(A)
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    mom = np.zeros((m, body.dim))
    chunk = max(1, min(n_samples, 2_000_000 // max(m, 1)))
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        pts = lo + (hi - lo) * rng.random((k, body.dim))
        inside = body.contains(pts)
        vals = np.where(inside, w.evaluate(pts), 0.0)
        hit = (pts @ U.T) >= A[None, :]
        contrib = hit * vals[:, None]
        s1 += contrib.sum(axis=0)
        s2 += (contrib ** 2).sum(axis=0)
        mom += contrib.T @ pts
        done += k
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean ** 2, 0.0)
    err = box * np.sqrt(var / max(n_samples - 1, 1))
    return box * mean, box * mom / n_samples, err


def _polytope_caps(body: ConvexBodySpec, U: np.ndarray, A: np.ndarray):
    V = body.polytope_vertices
    masses = np.zeros(len(A))
    moments = np.zeros((len(A), body.dim))
    if body.dim == 2:
        poly = order_polygon(V)
        for i, (u, a) in enumerate(zip(U, A)):
            piece = clip_polygon(poly, -u, -a)
            if len(piece) >= 3:
                area, centroid = polygon_area_centroid(piece)
                masses[i], moments[i] = area, area * centroid
        return masses, moments
    hull = body._hull
    edges = {tuple(sorted((s[i], s[j]))) for s in hull.simplices for i, j in ((0, 1), (1, 2), (0, 2))}
    edges = np.array(sorted(edges))
    for i, (u, a) in enumerate(zip(U, A)):
        proj = V @ u - a
        keep = V[proj >= 0]
        pa, pb = proj[edges[:, 0]], proj[edges[:, 1]]
        cross = (pa * pb) < 0
        if np.any(cross):
            ea, eb = V[edges[cross, 0]], V[edges[cross, 1]]
            tt = (pa[cross] / (pa[cross] - pb[cross]))[:, None]
            keep = np.vstack([keep, ea + tt * (eb - ea)])
        if len(keep) < 4:
            continue
        try:
            vol, centroid = polyhedron_volume_centroid(keep)
        except QhullError:
            continue
        masses[i], moments[i] = vol, vol * centroid
    return masses, moments


# -- polygons and polyhedra ------------------------------------------------------------

def order_polygon(V: np.ndarray) -> np.ndarray:
    c = V.mean(axis=0)
    ang = np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0])
    return V[np.argsort(ang)]


def polygon_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_area_centroid(P: np.ndarray) -> Tuple[float, np.ndarray]:
    x, y = P[:, 0], P[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = 0.5 * cross.sum()
    if signed == 0:
        return 0.0, P.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * signed)
    cy = np.sum((y + yn) * cross) / (6.0 * signed)
    return float(abs(signed)), np.array([cx, cy])


def polyhedron_volume_centroid(points: np.ndarray) -> Tuple[float, np.ndarray]:
    hull = ConvexHull(points)
    o = points[hull.vertices].mean(axis=0)
    tri = points[hull.simplices]
    vols = np.abs(np.einsum("ij,ij->i", tri[:, 0] - o, np.cross(tri[:, 1] - o, tri[:, 2] - o))) / 6.0
    cents = (tri.sum(axis=1) + o) / 4.0
    vol = vols.sum()
    return float(vol), (vols[:, None] * cents).sum(axis=0) / vol


def clip_polygon(P: np.ndarray, u: np.ndarray, a: float, eps: float = 1e-13) -> np.ndarray:
    """Clip a convex CCW polygon to {y : <y,u> <= a}; vectorized over vertices."""
    if len(P) == 0:
        return P
    s = P @ u - a
    inside = s <= eps * (1.0 + abs(a))
    if inside.all():
        return P
    if not inside.any():
        return P[:0]
    Q = np.roll(P, -1, axis=0)
    sq = np.roll(s, -1)
    crossing = inside != np.roll(inside, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(crossing, s / (s - sq), 0.0)
    inter = P + t[:, None] * (Q - P)
    slots = np.stack([P, inter], axis=1).reshape(-1, 2)
    mask = np.stack([inside, crossing], axis=1).ravel()
    return slots[mask]


def halfspace_intersection(normals, offsets, dim: int, bbox) -> ConvexBodySpec:
    """Vertex representation of {y : <y,u_i> <= a_i for all i} clipped to bbox."""
    U = np.atleast_2d(np.asarray(normals, dtype=float))
    a = np.asarray(offsets, dtype=float).ravel()
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    if dim == 2:
        P = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        for u, off in zip(U, a):
            P = clip_polygon(P, u, off)
            if len(P) < 3:
                raise GeometryError("floating body empty")
        P = _dedupe_cyclic(P)
        if len(P) < 3 or polygon_area(P) <= 0:
            raise GeometryError("floating body empty")
        return ConvexBodySpec(dim=2, kind="vpolytope", vertices=P, center=P.mean(axis=0),
                              bbox=(P.min(axis=0), P.max(axis=0)), label="halfspace-intersection")
    if dim != 3:
        raise GeometryError("halfspace intersection supports dims 2 and 3")
    eye = np.eye(3)
    U_all = np.vstack([U, eye, -eye])
    a_all = np.concatenate([a, hi, -lo])
    center, radius = _chebyshev_center(U_all, a_all)
    if radius <= 1e-12:
        raise GeometryError("floating body empty")
    slack = a_all - U_all @ center
    dual = U_all / slack[:, None]
    try:
        hull = ConvexHull(dual)
    except QhullError as exc:
        raise GeometryError(f"floating body empty: {exc}")
    eq = hull.equations
    verts = center - eq[:, :3] / eq[:, 3:4]
    verts = np.unique(np.round(verts, 12), axis=0)
    return ConvexBodySpec(dim=3, kind="vpolytope", vertices=verts, center=center,
                          bbox=(verts.min(axis=0), verts.max(axis=0)), label="halfspace-intersection")


def _dedupe_cyclic(P: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    d = np.linalg.norm(P - np.roll(P, -1, axis=0), axis=1)
    return P[d > tol * (1.0 + np.abs(P).max())]


def ellipsoid_cap_bounds(semi_axes, h: float) -> Tuple[float, float]:
    a = np.atleast_1d(np.asarray(semi_axes, dtype=float))
    n = a.size
    if h < 0:
        raise GeometryError("cap height must be >= 0")
    if h > a[-1]:
        raise GeometryError("cap exceeds semi-axis")
    C = 2.0 ** ((n + 1) / 2.0) * ball_volume(n - 1) * np.prod(a[:-1]) / ((n + 1) * a[-1] ** ((n - 1) / 2.0))
    upper = C * h ** ((n + 1) / 2.0)
    lower = upper * (1.0 - h / (2.0 * a[-1])) ** ((n - 1) / 2.0)
    return float(lower), float(upper)


# -- helpers -----------------------------------------------------------------------------

def _chebyshev_center(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, float]:
    dim = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(dim + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * dim + [(0, None)], method="highs")
    if res.status == 3:
        raise GeometryError("unbounded body")
    if res.status != 0:
        return np.zeros(dim), 0.0
    return res.x[:dim], float(res.x[-1])


def _lp_support(A: np.ndarray, b: np.ndarray, u: np.ndarray) -> Tuple[float, np.ndarray]:
    res = linprog(-u, A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1], method="highs")
    if res.status == 3:
        raise GeometryError("unbounded body")
    if res.status != 0:
        raise GeometryError(f"support LP failed: {res.message}")
    return float(-res.fun), res.x


def _radial_support(body: ConvexBodySpec, U: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Support by sampling boundary rays from the interior point, then local refinement."""
    o = body.interior_point
    if body.dim == 1:
        lo = o - body.radial_extent(np.array([[-1.0]]))[0]
        hi = o + body.radial_extent(np.array([[1.0]]))[0]
        pts = np.where(U > 0, hi, lo)
        return (pts * U).sum(axis=1), pts
    if body.dim == 2:
        k = 1024
        ang = 2.0 * np.pi * np.arange(k) / k
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        rho = body.radial_extent(dirs)
        best = np.argmax((o + rho[:, None] * dirs) @ U.T, axis=0)
        step = 2.0 * np.pi / k

        def value(theta):
            d = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            r = body.radial_extent(d)
            return np.sum((o + r[:, None] * d) * U, axis=1)

        theta, h = batched_golden(value, ang[best] - step, ang[best] + step, iters=60)
        d = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return h, o + body.radial_extent(d)[:, None] * d
    if body.dim == 3:
        k = 4096
        idx = np.arange(k) + 0.5
        zz = 1.0 - 2.0 * idx / k
        ph = np.pi * (1.0 + 5 ** 0.5) * idx
        rr = np.sqrt(1.0 - zz ** 2)
        dirs = np.stack([rr * np.cos(ph), rr * np.sin(ph), zz], axis=-1)
        rho = body.radial_extent(dirs)
        vals = (o + rho[:, None] * dirs) @ U.T
        best = np.argmax(vals, axis=0)
        cur = dirs[best]
        cur_val = vals[best, np.arange(len(U))]
        e1, e2 = _plane_frames(cur)
        step = np.full(len(U), 0.08)
        for _ in range(80):
            improved = np.zeros(len(U), dtype=bool)
            for sa, sb in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                trial = normalize_rows(cur + step[:, None] * (sa * e1 + sb * e2))
                tv = np.sum((o + body.radial_extent(trial)[:, None] * trial) * U, axis=1)
                better = tv > cur_val
                cur = np.where(better[:, None], trial, cur)
                cur_val = np.where(better, tv, cur_val)
                improved |= better
            step = np.where(improved, step, 0.5 * step)
            e1, e2 = _plane_frames(cur)
            if step.max() < 1e-9:
                break
        return cur_val, o + body.radial_extent(cur)[:, None] * cur
    raise GeometryError("radial support search supports dims 1-3")


def gauge_oracles(body: ConvexBodySpec):
    """(gauge, gradient, Hessian) of ||.||_K for bodies with the origin inside."""
    zero = np.zeros(body.dim)
    if body.kind in ("ball", "ellipsoid"):
        if np.abs(body.center).max() > 1e-12:
            raise GeometryError("gauge requires a body centered at the origin")
        M = body.radius * np.eye(body.dim) if body.kind == "ball" else body.frame * body.semi_axes
        Minv = np.linalg.inv(M)
        Q = Minv.T @ Minv

        def gauge(x):
            return np.linalg.norm(x @ Minv.T, axis=-1)

        def grad(x):
            g = gauge(x)[..., None]
            return np.where(g > 0, (x @ Q) / np.where(g > 0, g, 1.0), 0.0)

        def hess(x):
            g = gauge(x)[..., None, None]
            dg = grad(x)
            safe = np.where(g > 0, g, 1.0)
            return (Q - dg[..., :, None] * dg[..., None, :]) / safe

        return gauge, grad, hess
    if body.kind == "hpolytope":
        if np.any(body.b <= 0):
            raise GeometryError("gauge requires the origin in the interior")
        G = body.A / body.b[:, None]

        def gauge(x):
            return np.max(x @ G.T, axis=-1)

        def grad(x):
            return G[np.argmax(x @ G.T, axis=-1)]

        def hess(x):
            return np.zeros(np.shape(x) + (body.dim,))

        return gauge, grad, hess
    if body.kind == "gauge" and body.gauge is not None and np.allclose(body.center, zero):
        if body.gauge_grad is None:
            raise GeometryError("gauge body without gradient oracle")
        hess = body.gauge_hessian or (lambda x: finite_difference_hessian(body.gauge_grad, x))
        return body.gauge, body.gauge_grad, hess
    raise GeometryError("gauge requires the origin in the interior and a closed-form kind")


def _gauge_boundary_form(gauge, gauge_grad, gauge_hessian, center) -> BoundaryForm:
    def value(x):
        return gauge(x - center) - 1.0

    def grad(x):
        return gauge_grad(x - center)

    def hess(x):
        if gauge_hessian is not None:
            return gauge_hessian(x - center)
        return finite_difference_hessian(lambda y: gauge_grad(y - center), x)

    return BoundaryForm(value=value, grad=grad, hess=hess)


def finite_difference_hessian(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central differences of a vectorized gradient; step cbrt(eps)*max(1,|x|)."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    step = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.linalg.norm(x, axis=1))
    H = np.empty((x.shape[0], n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        H[:, :, j] = (grad(x + step[:, None] * e) - grad(x - step[:, None] * e)) / (2.0 * step[:, None])
    return 0.5 * (H + np.transpose(H, (0, 2, 1)))
