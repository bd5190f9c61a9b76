"""Turn a validated ExperimentConfig into domain objects and run one stage of work."""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

import numpy as np

from src.floatlab.asa_functionals import (
    ASAResult,
    asa_body_p,
    asa_body_weighted,
    asa_exponential,
    asa_lambda,
    asa_lambda_sconcave,
    asa_lift_body,
    asa_sconcave,
    asa_weighted,
)
from src.floatlab.config import Settings
from src.floatlab.convergence_lab import (
    ConvergenceReport,
    SweepExperiment,
    body_experiment,
    function_experiment,
    function_mass_scale,
    random_polytope_deficit,
    random_polytope_target,
    run_convergence,
    sconcave_experiment,
)
from src.floatlab.errors import ConfigError
from src.floatlab.floating_body import DirectionGrid, FloatingBodyApprox, weighted_floating_body
from src.floatlab.floating_function import (
    ConvexFunctionSpec,
    FloatingFunctionApprox,
    deficit_integrals,
    floating_function,
    slope_grid,
)
from src.floatlab.geometry_core import ConvexBodySpec, QuadratureSpec, total_mass
from src.floatlab.schemas import (
    BodyConfig,
    ExperimentConfig,
    FunctionConfig,
    QuadratureConfig,
    SConcaveConfig,
    WeightConfig,
)
from src.floatlab.sconcave_lift import (
    SConcaveFloatingApprox,
    SConcaveFunctionSpec,
    rotational_weight,
    sconcave_deficit,
    sconcave_floating_function,
)
from src.floatlab.weights import QuadraticProfile, WeightSpec

log = logging.getLogger(__name__)


# -- builders ------------------------------------------------------------------------------------

def build_body(cfg: BodyConfig) -> ConvexBodySpec:
    center = np.zeros(cfg.dim) if cfg.center is None else np.asarray(cfg.center, dtype=float)
    if cfg.kind == "ball":
        return ConvexBodySpec.ball(center, cfg.radius, label=cfg.label)
    if cfg.kind == "ellipsoid":
        return ConvexBodySpec.ellipsoid(center, cfg.semi_axes, label=cfg.label)
    if cfg.kind == "box":
        return ConvexBodySpec.box(cfg.lo, cfg.hi, label=cfg.label)
    if cfg.kind == "hpolytope":
        return ConvexBodySpec.hpolytope(cfg.A, cfg.b, label=cfg.label)
    if cfg.kind == "vpolytope":
        return ConvexBodySpec.vpolytope(cfg.vertices, label=cfg.label)
    return ConvexBodySpec.lp_ball(cfg.p, cfg.scales, label=cfg.label)


def build_function(cfg: FunctionConfig) -> ConvexFunctionSpec:
    if cfg.kind == "quadratic":
        A = np.eye(cfg.dim) if cfg.A is None else np.asarray(cfg.A, dtype=float)
        return ConvexFunctionSpec.quadratic(A, cfg.b, cfg.c, label=cfg.label)
    if cfg.kind == "gauge_square":
        return ConvexFunctionSpec.gauge_square(build_body(cfg.body), label=cfg.label)
    return ConvexFunctionSpec.piecewise_affine(cfg.slopes, cfg.intercepts, label=cfg.label)


def build_sconcave(cfg: SConcaveConfig) -> SConcaveFunctionSpec:
    return SConcaveFunctionSpec.poly_cap(cfg.n, cfg.s, cfg.profile)


def radial_quadratic_weight(ambient_dim: int, eta: float, scale: float) -> WeightSpec:
    """Phi(z) = eta (1 + scale |z|^2); eta is its uniform lower bound."""
    def oracle(z):
        return eta * (1.0 + scale * np.sum(z * z, axis=-1))

    return WeightSpec.custom(ambient_dim, oracle, eta=eta, label=f"radial_quadratic({eta:g},{scale:g})")


def build_weight(cfg: WeightConfig, ambient_dim: int, s: Optional[int] = None) -> WeightSpec:
    if cfg.kind == "constant":
        return WeightSpec.constant(ambient_dim, cfg.eta)
    if cfg.kind == "exponential_height":
        return WeightSpec.exponential_height(ambient_dim)
    if cfg.kind == "radial_quadratic":
        return radial_quadratic_weight(ambient_dim, cfg.eta, cfg.scale)
    if s is None:
        raise ConfigError("weight kind incompatible with experiment")
    profile = QuadraticProfile(cfg.eta, cfg.scale) if cfg.profile == "quadratic" else None
    return rotational_weight(ambient_dim - s, s, cfg.eta, profile)


def build_quadrature(cfg: QuadratureConfig, seed: Optional[int]) -> QuadratureSpec:
    return QuadratureSpec(method=cfg.method, points=cfg.points, angles=cfg.angles, samples=cfg.samples,
                          seed=seed or 0, abs_tol=cfg.abs_tol, rel_tol=cfg.rel_tol)


def _seed(cfg: ExperimentConfig, settings: Settings) -> int:
    return settings.seed if cfg.seed is None else cfg.seed


def _workers(cfg: ExperimentConfig, settings: Settings) -> int:
    return cfg.max_workers or settings.max_workers


def _slopes_per_axis(cfg: ExperimentConfig, dim: int) -> int:
    return cfg.grid.slopes_per_axis or (161 if dim == 1 else 41)


def build_experiment(cfg: ExperimentConfig, settings: Settings) -> SweepExperiment:
    quad = build_quadrature(cfg.quadrature, _seed(cfg, settings))
    workers = _workers(cfg, settings)
    wcfg = cfg.effective_weight()
    if cfg.experiment in ("eq_floating_body", "eq_weighted_body"):
        body = build_body(cfg.body)
        return body_experiment(body, build_weight(wcfg, body.dim), cfg.grid.directions, quad, workers)
    if cfg.experiment == "thm_sconcave":
        f = build_sconcave(cfg.sconcave)
        return sconcave_experiment(f, build_weight(wcfg, f.dim + f.s, f.s), cfg.grid.directions, quad, workers)
    if cfg.experiment == "random_polytope":
        raise ConfigError("random_polytope is not a delta sweep; use the randpoly command")
    psi = build_function(cfg.function)
    statistic = "integral" if cfg.experiment.startswith("thm_") else "weighted_l1"
    return function_experiment(psi, build_weight(wcfg, psi.dim + 1), statistic,
                               _slopes_per_axis(cfg, psi.dim), quad, cfg.truncation, workers)


def _single_delta(cfg: ExperimentConfig, scale: float, delta: Optional[float]) -> float:
    if delta is not None:
        return float(delta)
    return cfg.sweep.delta0 * (scale if cfg.sweep.relative else 1.0)


# -- stages --------------------------------------------------------------------------------------

def run_float_body(cfg: ExperimentConfig, settings: Settings,
                   delta: Optional[float] = None) -> FloatingBodyApprox:
    if cfg.body is None:
        raise ConfigError("float-body needs a body section")
    body = build_body(cfg.body)
    quad = build_quadrature(cfg.quadrature, _seed(cfg, settings))
    w = build_weight(cfg.effective_weight(), body.dim)
    d = _single_delta(cfg, total_mass(body, w, quad), delta)
    grid = DirectionGrid.uniform(body.dim, cfg.grid.directions, seed=quad.seed)
    return weighted_floating_body(body, w, d, grid, quad, max_workers=_workers(cfg, settings))


def run_float_func(cfg: ExperimentConfig, settings: Settings,
                   delta: Optional[float] = None) -> tuple[FloatingFunctionApprox, Any]:
    if cfg.function is None:
        raise ConfigError("float-func needs a function section")
    psi = build_function(cfg.function)
    quad = build_quadrature(cfg.quadrature, _seed(cfg, settings))
    w = build_weight(cfg.effective_weight(), psi.dim + 1)
    d = _single_delta(cfg, function_mass_scale(psi, w, cfg.truncation), delta)
    slopes = slope_grid(psi, _slopes_per_axis(cfg, psi.dim), cfg.truncation)
    approx = floating_function(psi, w, d, slopes, quad, cfg.truncation, max_workers=_workers(cfg, settings))
    return approx, deficit_integrals(psi, approx, quad, cfg.truncation)


def run_sconcave(cfg: ExperimentConfig, settings: Settings,
                 delta: Optional[float] = None) -> tuple[SConcaveFloatingApprox, float]:
    if cfg.sconcave is None:
        raise ConfigError("sconcave needs an sconcave section")
    f = build_sconcave(cfg.sconcave)
    quad = build_quadrature(cfg.quadrature, _seed(cfg, settings))
    phi = build_weight(cfg.effective_weight(), f.dim + f.s, f.s)
    d = _single_delta(cfg, 1.0, delta)
    grid = DirectionGrid.uniform(f.dim + 1, cfg.grid.directions, seed=quad.seed)
    approx = sconcave_floating_function(f, phi, d, grid, quad, max_workers=_workers(cfg, settings))
    return approx, sconcave_deficit(f, approx, quad)


def run_asa(cfg: ExperimentConfig, lambdas=(0.0, 0.25, 0.5, 1.0)) -> List[ASAResult]:
    """Every functional that applies to the configured objects."""
    out: List[ASAResult] = []
    wcfg = cfg.effective_weight()
    if cfg.body is not None:
        body = build_body(cfg.body)
        if body.dim <= 3:
            for p in (1.0, body.dim / (body.dim + 1.0)):
                out.append(asa_body_p(body, p))
            if wcfg.kind in ("constant", "radial_quadratic") and body.dim > 1:
                out.append(asa_body_weighted(body, build_weight(wcfg, body.dim)))
    if cfg.function is not None:
        psi = build_function(cfg.function)
        out.append(asa_exponential(psi, cfg.truncation))
        if wcfg.kind != "rotational":
            out.append(asa_weighted(psi, build_weight(wcfg, psi.dim + 1), cfg.truncation))
        for lam in lambdas:
            out.append(asa_lambda(psi, lam, cfg.truncation))
    if cfg.sconcave is not None:
        f = build_sconcave(cfg.sconcave)
        phi = build_weight(wcfg, f.dim + f.s, f.s) if wcfg.kind in ("constant", "rotational") else None
        out.append(asa_sconcave(f, phi))
        out.append(asa_lambda_sconcave(f, 1.0 / (f.dim + f.s + 1)))
        if f.dim + f.s <= 3:
            out.append(asa_lift_body(f))
    return out


def run_converge(cfg: ExperimentConfig, settings: Settings, progress: bool = True) -> ConvergenceReport:
    experiment = build_experiment(cfg, settings)
    return run_convergence(experiment, cfg.sweep.delta0, cfg.sweep.q, cfg.sweep.k, cfg.sweep.tolerance,
                           relative=cfg.sweep.relative, max_workers=_workers(cfg, settings),
                           progress=progress)


def run_randpoly(cfg: ExperimentConfig, settings: Settings, progress: bool = True) -> Dict[str, Any]:
    if cfg.body is None:
        raise ConfigError("randpoly needs a body section")
    if cfg.seed is None:
        raise ConfigError("seed is required when Monte Carlo is used")
    body = build_body(cfg.body)
    rp = cfg.random_polytope
    estimate, half = random_polytope_deficit(body, rp.N, rp.trials, cfg.seed,
                                             max_workers=_workers(cfg, settings), progress=progress)
    target = random_polytope_target(body)
    rel = abs(estimate - target) / target if target > 0 else abs(estimate)
    return {
        "experiment": "random_polytope",
        "label": body.label,
        "N": rp.N,
        "trials": rp.trials,
        "seed": cfg.seed,
        "estimate": estimate,
        "half_width": half,
        "target": target,
        "relative_error": rel,
        "covers_target": bool(abs(estimate - target) <= half),
        "tolerance": rp.tolerance,
        "passed": bool(rel <= rp.tolerance),
    }
