"""Affine surface area functionals of bodies, log-concave and s-concave functions."""
from __future__ import annotations

import logging
import math
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import quad as scipy_quad

from src.floatlab.errors import GeometryError, NumericalError
from src.floatlab.floating_function import ConvexFunctionSpec, function_floating_constant
from src.floatlab.geometry_core import (
    BoundaryForm,
    ConvexBodySpec,
    ball_volume,
    circle_nodes,
    integrate_over_body,
    sphere_area,
    sphere_nodes,
)
from src.floatlab.numerics import tensor_gauss
from src.floatlab.sconcave_lift import SConcaveFunctionSpec, lift_body
from src.floatlab.weights import WeightSpec

log = logging.getLogger(__name__)

CONSTANT_KINDS = ("body_n", "func_n1", "sconcave_ns")


class ASAResult(BaseModel):
    value: float = Field(ge=0, description="Value of the functional")
    functional: str = Field(description="as_p, as_phi, as_phi_e, as_lambda, as_s_phi, as_lambda_s or as_body_phi")
    params: Dict[str, Any] = Field(default_factory=dict, description="p, lambda, s, weight label")
    error: float = Field(ge=0, description="Quadrature error estimate")


def constant_c(kind: str, n: int, s: int | None = None) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "body_n":
        return 0.5 * ((n + 1) / ball_volume(n - 1)) ** (2.0 / (n + 1))
    if kind == "func_n1":
        return function_floating_constant(n)
    if kind == "sconcave_ns":
        if s is None or s < 1:
            raise ValueError("s must be >= 1 for the s-concave constant")
        d = n + s
        return 0.5 * s * ((d + 1) / (d * ball_volume(d))) ** (2.0 / (d + 1))
    raise ValueError(f"unknown constant kind {kind!r}")


# -- bodies ---------------------------------------------------------------------------------

def _boundary_form(body: ConvexBodySpec) -> BoundaryForm:
    d = body.dim
    if body.kind == "ball":
        c, r = body.center, body.radius
        return BoundaryForm(
            value=lambda x: np.sum((x - c) ** 2, axis=-1) - r * r,
            grad=lambda x: 2.0 * (x - c),
            hess=lambda x: np.broadcast_to(2.0 * np.eye(d), np.shape(x)[:-1] + (d, d)))
    if body.kind == "ellipsoid":
        c = body.center
        Minv = np.linalg.inv(body.frame * body.semi_axes)
        Q = Minv.T @ Minv
        return BoundaryForm(
            value=lambda x: np.einsum("...i,ij,...j->...", x - c, Q, x - c) - 1.0,
            grad=lambda x: 2.0 * (x - c) @ Q,
            hess=lambda x: np.broadcast_to(2.0 * Q, np.shape(x)[:-1] + (d, d)))
    if body.boundary is not None:
        return body.boundary
    raise GeometryError("boundary with curvature oracle unavailable")


def _boundary_rule(body: ConvexBodySpec, resolution: int):
    """Boundary points z, Gauss curvature, <z,N> and the measure weights dmu."""
    d = body.dim
    origin = np.zeros(d)
    if not body.contains(origin[None, :])[0]:
        raise GeometryError("the origin must be an interior point")
    if d == 2:
        ang, w = circle_nodes(resolution)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    elif d == 3:
        dirs, w = sphere_nodes(max(8, resolution // 2), resolution)
    else:
        raise GeometryError("boundary quadrature supports dims 1-3")
    form = _boundary_form(body)
    rho = body.radial_extent(dirs, origin, iters=64)
    z = rho[:, None] * dirs
    g = form.grad(z)
    H = form.hess(z)
    gn = np.linalg.norm(g, axis=1)
    N = g / gn[:, None]
    bordered = np.zeros((len(z), d + 1, d + 1))
    bordered[:, :d, :d] = H
    bordered[:, :d, d] = g
    bordered[:, d, :d] = g
    kappa = np.maximum(-np.linalg.det(bordered) / gn ** (d + 1), 0.0)
    zN = np.sum(z * N, axis=1)
    dmu = w * rho ** (d - 1) / np.sum(dirs * N, axis=1)
    return z, kappa, zN, dmu


def _default_resolution(d: int) -> int:
    return 4096 if d == 2 else 192


def asa_body_p(body: ConvexBodySpec, p: float, resolution: int | None = None) -> ASAResult:
    """L_p affine surface area: int kappa^{p/(n+p)} <z,N>^{-n(p-1)/(n+p)} dmu."""
    n = body.dim
    if p == -n:
        raise ValueError("p = -n is not allowed")
    if n == 1:
        ends = np.array([body.support_points(np.array([[1.0]]))[0][0],
                         body.support_points(np.array([[-1.0]]))[0][0]])
        if np.any(ends <= 0):
            raise GeometryError("the origin must be an interior point")
        value = float(np.sum(ends ** (-(p - 1.0) / (1.0 + p))))
        return ASAResult(value=value, functional="as_p", params={"p": p}, error=0.0)
    res = resolution or _default_resolution(n)

    def total(r):
        _, kappa, zN, dmu = _boundary_rule(body, r)
        vals = kappa ** (p / (n + p)) * zN ** (-n * (p - 1.0) / (n + p))
        return float(np.sum(vals * dmu))

    fine = total(res)
    coarse = total(max(8, res // 2))
    log.debug("as_p %s p=%g value=%.10g", body.label, p, fine)
    return ASAResult(value=fine, functional="as_p", params={"p": p, "body": body.label},
                     error=abs(fine - coarse))


def asa_body_weighted(body: ConvexBodySpec, w: WeightSpec, resolution: int | None = None) -> ASAResult:
    """int kappa^{1/(n+1)} Phi^{-2/(n+1)} dmu, the limit functional of weighted floating bodies."""
    n = body.dim
    if w.ambient_dim != n:
        raise ValueError("weight is defined on a different ambient space")
    res = resolution or _default_resolution(n)

    def total(r):
        z, kappa, _, dmu = _boundary_rule(body, r)
        vals = kappa ** (1.0 / (n + 1)) * w.evaluate(z) ** (-2.0 / (n + 1))
        return float(np.sum(vals * dmu))

    fine = total(res)
    coarse = total(max(8, res // 2))
    return ASAResult(value=fine, functional="as_body_phi", params={"weight": w.label, "body": body.label},
                     error=abs(fine - coarse))


# -- log-concave functions ---------------------------------------------------------------------

def _tensor_integral(psi: ConvexFunctionSpec, integrand, T: float, panel_width: float = 0.5):
    lo, hi = psi.sublevel_box(T)
    panels = [max(4, int(math.ceil((h - l) / panel_width))) for l, h in zip(lo, hi)]
    results = []
    for order in (8, 6):
        pts, wts = tensor_gauss(lo, hi, panels, order)
        results.append(float(np.sum(wts * integrand(pts))))
    return results[0], abs(results[0] - results[1])


def _hessian_det(psi: ConvexFunctionSpec, pts: np.ndarray) -> np.ndarray:
    return np.maximum(np.linalg.det(psi.hessian(pts)), 0.0)


def asa_weighted(psi: ConvexFunctionSpec, w: WeightSpec, truncation: float = 40.0) -> ASAResult:
    n = psi.dim
    if w.ambient_dim != n + 1:
        raise ValueError("weight must live on R^{n+1}")

    def integrand(x):
        vals = psi.value(x)
        phi = w.evaluate(np.concatenate([x, vals[:, None]], axis=1))
        return _hessian_det(psi, x) ** (1.0 / (n + 2)) * phi ** (-2.0 / (n + 2)) * np.exp(-vals)

    value, err = _tensor_integral(psi, integrand, truncation)
    return ASAResult(value=max(value, 0.0), functional="as_phi", params={"weight": w.label}, error=err)


def asa_exponential(psi: ConvexFunctionSpec, truncation: float = 40.0) -> ASAResult:
    n = psi.dim

    def integrand(x):
        return _hessian_det(psi, x) ** (1.0 / (n + 2)) * np.exp(-n / (n + 2.0) * psi.value(x))

    value, err = _tensor_integral(psi, integrand, truncation * (n + 2.0) / n)
    return ASAResult(value=max(value, 0.0), functional="as_phi_e", params={}, error=err)


def asa_lambda(psi: ConvexFunctionSpec, lam: float, truncation: float = 40.0) -> ASAResult:
    n = psi.dim

    def integrand(x):
        vals = psi.value(x)
        radial = np.sum(x * psi.grad(x), axis=1)
        det = _hessian_det(psi, x)
        power = det ** lam if lam != 0 else np.ones_like(det)
        return np.exp((2.0 * lam - 1.0) * vals - lam * radial) * power

    value, err = _tensor_integral(psi, integrand, truncation * (1.0 + 2.0 * abs(lam)))
    return ASAResult(value=max(value, 0.0), functional="as_lambda", params={"lambda": lam}, error=err)


# -- s-concave functions -----------------------------------------------------------------------

def _phi_on_graph(phi: WeightSpec | None, f: SConcaveFunctionSpec, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    if phi is None:
        return np.ones(len(x))
    pts = np.zeros((len(x), phi.ambient_dim))
    pts[:, : f.dim] = x
    pts[:, f.dim] = g
    return phi.evaluate(pts)


def _support_integral(f: SConcaveFunctionSpec, integrand) -> tuple[float, float]:
    if f.dim == 1:
        lo, hi = float(f.support.bbox[0][0]), float(f.support.bbox[1][0])
        value, err = scipy_quad(lambda t: float(integrand(np.array([[t]]))[0]), lo, hi, limit=200,
                                epsabs=1e-12, epsrel=1e-10)
        return value, err
    fine = integrate_over_body(f.support, integrand, order=48)
    coarse = integrate_over_body(f.support, integrand, order=32)
    return fine, abs(fine - coarse)


def asa_sconcave(f: SConcaveFunctionSpec, phi: WeightSpec | None = None) -> ASAResult:
    n, s = f.dim, f.s
    d1 = n + s + 1
    if phi is not None and phi.ambient_dim != n + s:
        raise ValueError("weight must live on R^{n+s}")

    def integrand(x):
        g = np.maximum(np.asarray(f.root_fn(x), dtype=float), 0.0)
        det = np.abs(np.linalg.det(f.root_hess(x)))
        fpow = (g ** s) ** ((s - 1) * (n + s) / (s * d1)) if s > 1 else np.ones_like(g)
        return det ** (1.0 / d1) * fpow * _phi_on_graph(phi, f, x, g) ** (-2.0 / d1)

    value, err = _support_integral(f, integrand)
    return ASAResult(value=max(value, 0.0), functional="as_s_phi",
                     params={"s": s, "weight": phi.label if phi is not None else "1"}, error=err)


def asa_lambda_sconcave(f: SConcaveFunctionSpec, lam: float) -> ASAResult:
    """lambda-affine surface area of f through psi_f = s(1 - f^{1/s}), prefactor 1/(1+ns)."""
    n, s = f.dim, f.s

    def integrand(x):
        g = np.maximum(np.asarray(f.root_fn(x), dtype=float), 0.0)
        dg = f.root_grad(x)
        det = np.maximum(np.linalg.det(-s * f.root_hess(x)), 0.0)
        denom = g - np.sum(x * dg, axis=1)
        top = (g ** ((s - 1) * (1.0 - lam)) if s > 1 else np.ones_like(g)) * det ** lam
        return top / denom ** (lam * (n + s + 1) - 1.0)

    value, err = _support_integral(f, integrand)
    pref = 1.0 / (1.0 + n * s)
    return ASAResult(value=max(pref * value, 0.0), functional="as_lambda_s",
                     params={"s": s, "lambda": lam}, error=pref * err)


def sconcave_body_constant(n: int, s: int) -> float:
    """s^{n/2+1} / ((n+s) vol_{s-1}(S^{s-1})), linking as_lambda(f) to as(K_f^s)."""
    return s ** (n / 2.0 + 1.0) / ((n + s) * sphere_area(s))


def sconcave_lambda_constant(n: int, s: int) -> float:
    """s^{(2n+s+1)/(n+s+1)} / (n+s), linking as_lambda(f) to the s-concave functional."""
    return s ** ((2.0 * n + s + 1.0) / (n + s + 1.0)) / (n + s)


def asa_lift_body(f: SConcaveFunctionSpec, p: float = 1.0, resolution: int | None = None) -> ASAResult:
    """as_p(K_f^s) for n + s <= 3."""
    body = lift_body(f).as_body()
    if body.dim > 3:
        raise NumericalError("affine surface area of K_f^s needs n + s <= 3")
    return asa_body_p(body, p, resolution=resolution)


def gauge_identity_check(body: ConvexBodySpec, resolution: int | None = None) -> tuple[float, float]:
    n = body.dim
    lhs = asa_exponential(ConvexFunctionSpec.gauge_square(body)).value
    pref = (1.0 + 2.0 / n) ** (n / 2.0) * (2.0 * np.pi) ** (n / 2.0) / (n * ball_volume(n))
    rhs = pref * asa_body_p(body, n / (n + 1.0), resolution=resolution).value
    log.info("gauge identity %s lhs=%.10g rhs=%.10g", body.label, lhs, rhs)
    return lhs, rhs
