"""s-concave functions, their bodies of revolution K_f^s and s-concave floating functions.

K_f^s = {(x, y) in R^n x R^s : x in supp f, |y| <= f(x)^{1/s}} is rotationally
symmetric in y, so all cap computations run on the meridian section
M_f = {(x, t) : |t| <= f(x)^{1/s}} in R^{n+1} under the induced weight.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from src.floatlab.errors import GeometryError
from src.floatlab.floating_body import DirectionGrid, FloatingBodyApprox, weighted_floating_body
from src.floatlab.geometry_core import (
    BoundaryForm,
    ConvexBodySpec,
    QuadratureSpec,
    ball_volume,
    clip_polygon,
    integrate_over_body,
    order_polygon,
    polygon_area_centroid,
    sphere_area,
)
from src.floatlab.numerics import batched_golden, circle_nodes, composite_gauss, ray_bisect, sphere_nodes
from src.floatlab.weights import ConstantProfile, WeightSpec, induced_meridian_weight

log = logging.getLogger(__name__)

SCONCAVE_PROFILES = ("one_minus_norm_sq", "one_minus_norm")


@dataclass(frozen=True, eq=False)
class SConcaveFunctionSpec:
    """f = g^s on a compact convex support, g = f^{1/s} concave and >= 0 there."""
    dim: int
    s: int
    kind: str
    root_fn: Callable[[np.ndarray], np.ndarray]
    root_grad: Callable[[np.ndarray], np.ndarray]
    root_hess: Callable[[np.ndarray], np.ndarray]
    support: ConvexBodySpec
    label: str = ""

    def __post_init__(self):
        if self.s < 1 or int(self.s) != self.s:
            raise ValueError("s must be a positive integer")
        if self.support.dim != self.dim:
            raise ValueError("support body has the wrong dimension")
        self.check_concavity()

    @classmethod
    def poly_cap(cls, n: int, s: int, profile: str = "one_minus_norm_sq") -> "SConcaveFunctionSpec":
        """f = (1 - |x|^2)^s or (1 - |x|)^s on the unit ball."""
        support = ConvexBodySpec.ball(np.zeros(n), 1.0, label="unit-ball")
        eye = np.eye(n)
        if profile == "one_minus_norm_sq":
            def g(x):
                return 1.0 - np.sum(x * x, axis=-1)

            def dg(x):
                return -2.0 * x

            def d2g(x):
                return np.broadcast_to(-2.0 * eye, np.shape(x)[:-1] + (n, n))
        elif profile == "one_minus_norm":
            def g(x):
                return 1.0 - np.linalg.norm(x, axis=-1)

            def dg(x):
                r = np.linalg.norm(x, axis=-1, keepdims=True)
                return -x / np.where(r > 0, r, 1.0)

            def d2g(x):
                r = np.linalg.norm(x, axis=-1)[..., None, None]
                u = -dg(x)
                safe = np.where(r > 0, r, 1.0)
                return -(eye - u[..., :, None] * u[..., None, :]) / safe
        else:
            raise ValueError(f"unknown s-concave profile {profile!r}")
        return cls(dim=n, s=int(s), kind="poly_cap", root_fn=g, root_grad=dg, root_hess=d2g,
                   support=support, label=f"({profile})^{s}")

    @classmethod
    def custom(cls, n: int, s: int, root, root_grad, root_hess, support: ConvexBodySpec,
               label: str = "custom") -> "SConcaveFunctionSpec":
        return cls(dim=n, s=int(s), kind="custom", root_fn=root, root_grad=root_grad,
                   root_hess=root_hess, support=support, label=label)

    def root(self, x) -> np.ndarray:
        """f^{1/s}, zero outside the support."""
        x = np.asarray(x, dtype=float)
        vals = np.asarray(self.root_fn(x))
        return np.where(self.support.contains(x), np.maximum(vals, 0.0), 0.0)

    def value(self, x) -> np.ndarray:
        return self.root(x) ** self.s

    __call__ = value

    def check_concavity(self, pairs: int = 256, seed: int = 0, tol: float = 1e-9) -> None:
        lo, hi = self.support.bbox
        rng = np.random.Generator(np.random.Philox(seed))
        cand = lo + (hi - lo) * rng.random((4 * pairs, self.dim))
        cand = cand[self.support.contains(cand)]
        if len(cand) < 2:
            raise GeometryError("support has empty interior")
        x, y = cand[0::2][: len(cand) // 2], cand[1::2][: len(cand) // 2]
        if np.any(np.asarray(self.root_fn(cand)) < -tol):
            raise ValueError("f^{1/s} is negative on the support")
        mid = self.root(0.5 * (x + y))
        avg = 0.5 * (self.root(x) + self.root(y))
        if np.any(mid < avg - tol):
            raise ValueError("f^{1/s} fails the midpoint concavity check")

    def integral(self, quad: QuadratureSpec | None = None) -> float:
        return integrate_over_body(self.support, lambda x: self.value(x), quad, order=32)

    @cached_property
    def peak(self) -> float:
        lo, hi = self.support.bbox
        axes = [np.linspace(l, h, 201 if self.dim == 1 else 61) for l, h in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        pts = np.vstack([grid, self.support.interior_point[None, :]])
        return float(self.root(pts).max())


@dataclass(frozen=True, eq=False)
class LiftedBody:
    source: SConcaveFunctionSpec
    meridian: ConvexBodySpec

    @property
    def ambient_dim(self) -> int:
        return self.source.dim + self.source.s

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        n = self.source.dim
        x, y = z[..., :n], z[..., n:]
        return self.source.support.contains(x) & (np.linalg.norm(y, axis=-1) <= self.source.root(x) * (1 + 1e-12))

    def volume(self, quad: QuadratureSpec | None = None) -> float:
        """vol_{n+s}(K_f^s) = vol_s(B^s) * int f."""
        return ball_volume(self.source.s) * self.source.integral(quad)

    def as_body(self) -> ConvexBodySpec:
        """K_f^s itself as a body in R^{n+s} (needs n+s <= 3)."""
        f = self.source
        n, s = f.dim, f.s
        if s == 1:
            return self.meridian
        d = n + s
        peak = f.peak * (1.0 + 1e-9)
        lo = np.concatenate([f.support.bbox[0], np.full(s, -peak)])
        hi = np.concatenate([f.support.bbox[1], np.full(s, peak)])
        return ConvexBodySpec.gauge_body(
            None, (lo, hi), contains=self.contains, support=None,
            boundary=_lift_boundary_form(f), center=np.concatenate([f.support.interior_point, np.zeros(s)]),
            label=f"K_f^{s}[{f.label}]", meta={"lift": True, "ambient_dim": d})


def _lift_boundary_form(f: SConcaveFunctionSpec) -> BoundaryForm:
    """F(x, y) = |y|^2 - g(x)^2, negative inside the body of revolution."""
    n = f.dim

    def value(z):
        x, y = z[..., :n], z[..., n:]
        return np.sum(y * y, axis=-1) - np.asarray(f.root_fn(x)) ** 2

    def grad(z):
        x, y = z[..., :n], z[..., n:]
        g = np.asarray(f.root_fn(x))[..., None]
        return np.concatenate([-2.0 * g * f.root_grad(x), 2.0 * y], axis=-1)

    def hess(z):
        x, y = z[..., :n], z[..., n:]
        d = z.shape[-1]
        g = np.asarray(f.root_fn(x))[..., None, None]
        dg = f.root_grad(x)
        H = np.zeros(z.shape[:-1] + (d, d))
        H[..., :n, :n] = -2.0 * (dg[..., :, None] * dg[..., None, :] + g * f.root_hess(x))
        H[..., n:, n:] = 2.0 * np.eye(d - n)
        return H

    return BoundaryForm(value=value, grad=grad, hess=hess)


def _meridian_support(f: SConcaveFunctionSpec):
    lo, hi = float(f.support.bbox[0][0]), float(f.support.bbox[1][0])

    def support(U):
        ux, ut = U[:, 0], np.abs(U[:, 1])

        def h(x):
            return ux * x + ut * f.root(x[:, None])

        x, val = batched_golden(h, np.full(len(U), lo), np.full(len(U), hi), iters=90)
        t = np.sign(U[:, 1]) * f.root(x[:, None])
        return val, np.stack([x, t], axis=-1)

    return support


def lift_body(f: SConcaveFunctionSpec) -> LiftedBody:
    n = f.dim
    if n > 2:
        raise GeometryError("meridian sections are supported for n <= 2")
    peak = f.peak * (1.0 + 1e-9) + 1e-12
    lo = np.concatenate([f.support.bbox[0], [-peak]])
    hi = np.concatenate([f.support.bbox[1], [peak]])

    def contains(z):
        z = np.asarray(z, dtype=float)
        x, t = z[..., :n], z[..., n]
        return f.support.contains(x) & (np.abs(t) <= f.root(x) * (1 + 1e-12))

    center = np.concatenate([f.support.interior_point, [0.0]])
    boundary = _lift_boundary_form(f) if f.s == 1 else None
    meridian = ConvexBodySpec.gauge_body(
        None, (lo, hi), contains=contains, support=_meridian_support(f) if n == 1 else None,
        boundary=boundary, center=center, label=f"M[{f.label}]")
    return LiftedBody(source=f, meridian=meridian)


def rotational_weight(n: int, s: int, eta: float = 1.0, profile=None) -> WeightSpec:
    """Phi(x, y) = phi(x, |y|) on R^{n+s}; constant phi by default."""
    prof = profile if profile is not None else ConstantProfile(eta)
    return WeightSpec.rotational(n + s, s, prof, eta=eta if profile is None else 0.0,
                                 label="phi=const" if profile is None else "phi")


@dataclass(frozen=True, eq=False)
class SConcaveFloatingApprox:
    """f^Phi_delta(x) = rho(x)^s with rho the slice radius of the floating body."""
    source: SConcaveFunctionSpec
    lift: LiftedBody
    weight: WeightSpec
    delta: float
    floating: FloatingBodyApprox

    def radius(self, x) -> np.ndarray:
        """Exact height of the floating polytope above (x, 0)."""
        x = np.asarray(x, dtype=float)
        n = self.source.dim
        flat = x.reshape(-1, n)
        U = self.floating.grid.directions
        a = self.floating.offsets
        slack = a[None, :] - flat @ U[:, :n].T                       # (k, m)
        ut = U[:, n]
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(ut > 1e-15, slack / ut, np.inf).min(axis=1)
            down = np.where(ut < -1e-15, slack / ut, -np.inf).max(axis=1)
        level = np.where(np.abs(ut) <= 1e-15, slack, np.inf).min(axis=1)
        r = np.minimum(up, self.source.root(flat))
        r = np.where((down <= 1e-14) & (level >= -1e-14) & (r > 0), r, 0.0)
        return r.reshape(x.shape[:-1])

    def evaluate(self, x) -> np.ndarray:
        if self.delta == 0:
            return self.source.value(x)
        return self.radius(x) ** self.source.s

    __call__ = evaluate

    def revolution_volume(self) -> float:
        """vol_{n+s} of the body of revolution of the meridian floating body."""
        f = self.source
        if f.s == 1:
            return self.floating.volume
        if f.dim == 1:
            outer = _half_plane_revolution(order_polygon(self.floating.vertices), f.s)
            inner = _half_plane_revolution(order_polygon(self.floating.touching), f.s)
            return (2.0 * outer + inner) / 3.0
        return ball_volume(f.s) * integrate_over_body(f.support, lambda x: self.radius(x) ** f.s, order=32)


def _half_plane_revolution(P: np.ndarray, s: int) -> float:
    """Volume swept by the t >= 0 part of a planar polygon rotated in s dims (s = 2 or 3)."""
    Q = clip_polygon(P, np.array([0.0, -1.0]), 0.0)
    if len(Q) < 3:
        return 0.0
    if s == 2:
        area, centroid = polygon_area_centroid(Q)
        return 2.0 * np.pi * area * centroid[1]
    # int_Q |S^{s-1}| t^{s-1} dA by fan triangulation and a degree-2 exact rule
    total = 0.0
    o = Q[0]
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    for i in range(1, len(Q) - 1):
        tri = np.stack([o, Q[i], Q[i + 1]])
        area = 0.5 * abs(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
        t = (bary @ tri)[:, 1]
        total += area * np.mean(t ** (s - 1))
    return sphere_area(s) * total


def sconcave_floating_function(f: SConcaveFunctionSpec, phi: WeightSpec, delta: float,
                               grid: DirectionGrid, quad: QuadratureSpec | None = None,
                               max_workers: int = 1) -> SConcaveFloatingApprox:
    quad = quad or QuadratureSpec()
    n, s = f.dim, f.s
    if phi.kind == "constant":
        phi = rotational_weight(n, s, phi.eta) if s > 1 or phi.ambient_dim != n + 1 else phi
    if phi.kind not in ("rotational", "constant"):
        raise ValueError("weight kind incompatible with experiment")
    if phi.ambient_dim != n + s:
        raise ValueError("weight must live on R^{n+s}")
    if grid.dim != n + 1:
        raise ValueError("direction grid must live on the meridian R^{n+1}")
    lift = lift_body(f)
    w_meridian = induced_meridian_weight(phi, f.root_fn)
    fb = weighted_floating_body(lift.meridian, w_meridian, delta, grid, quad, max_workers=max_workers)
    log.info("s-concave floating function %s s=%d delta=%.3g", f.label, s, delta)
    return SConcaveFloatingApprox(f, lift, phi, float(delta), fb)


def slice_volume(approx: SConcaveFloatingApprox, x, iters: int = 60) -> float:
    """vol_s of the slice of the floating body at x, normalized by vol_s(B^s), by radial bisection."""
    f = approx.source
    n, s = f.dim, f.s
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t_max = 2.0 * f.peak + 1.0

    def inside_meridian(pts):
        return approx.floating.contains(pts, tol=1e-12)

    base = np.concatenate([x, [0.0]])
    if not inside_meridian(base[None, :])[0]:
        return 0.0
    if s == 1:
        e = np.zeros(n + 1)
        e[n] = 1.0
        up = ray_bisect(inside_meridian, base[None, :], e[None, :], t_max, iters=iters)[0]
        down = ray_bisect(inside_meridian, base[None, :], -e[None, :], t_max, iters=iters)[0]
        return float(0.5 * (up + down))

    def inside_lift(y):
        r = np.linalg.norm(y, axis=-1)
        pts = np.concatenate([np.broadcast_to(x, r.shape + (n,)), r[..., None]], axis=-1)
        return inside_meridian(pts)

    if s == 2:
        ang, wang = circle_nodes(64)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    elif s == 3:
        dirs, wang = sphere_nodes(16, 32)
    else:
        raise GeometryError("direct slice volumes support s <= 3")
    r = ray_bisect(inside_lift, np.zeros((1, s)), dirs, t_max, iters=iters)
    vol = float(np.sum(r ** s * wang) / s)
    return vol / ball_volume(s)


def sconcave_deficit(f: SConcaveFunctionSpec, approx: SConcaveFloatingApprox,
                     quad: QuadratureSpec | None = None, method: str = "volume") -> float:
    """int (f - f^Phi_delta) over supp f."""
    if approx.delta == 0:
        return 0.0
    if method == "volume":
        return f.integral(quad) - approx.revolution_volume() / ball_volume(f.s)
    if method == "slice":
        if f.dim == 1:
            lo, hi = float(f.support.bbox[0][0]), float(f.support.bbox[1][0])
            xs, ws = composite_gauss(lo, hi, 256, 8)
            vals = f.value(xs[:, None]) - approx.evaluate(xs[:, None])
            return float(np.sum(vals * ws))
        return integrate_over_body(f.support, lambda x: f.value(x) - approx.evaluate(x), quad, order=32)
    raise ValueError(f"unknown deficit method {method!r}")
