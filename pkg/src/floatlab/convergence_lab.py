"""delta-sweeps of floating deficits, extrapolation of their ratios and theorem verdicts."""
from __future__ import annotations

import logging
import math
import time
from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import brentq, minimize_scalar
from scipy.spatial import ConvexHull, QhullError
from sklearn.linear_model import LinearRegression
from tqdm import tqdm

from src.floatlab.asa_functionals import (
    asa_body_p,
    asa_body_weighted,
    asa_exponential,
    asa_sconcave,
    asa_weighted,
    constant_c,
)
from src.floatlab.errors import GeometryError, NumericalError, SweepError
from src.floatlab.floating_body import DirectionGrid, weighted_floating_body
from src.floatlab.floating_function import (
    ConvexFunctionSpec,
    deficit_integrals,
    floating_function,
    slope_grid,
)
from src.floatlab.geometry_core import ConvexBodySpec, QuadratureSpec, ball_volume, body_volume, total_mass
from src.floatlab.numerics import tensor_gauss
from src.floatlab.sconcave_lift import (
    SConcaveFunctionSpec,
    rotational_weight,
    sconcave_deficit,
    sconcave_floating_function,
)
from src.floatlab.utils import run_concurrently, spawn_generators
from src.floatlab.weights import WeightSpec

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "eq_floating_body",
    "eq_weighted_body",
    "thm_weighted",
    "thm_exponential",
    "thm_sconcave",
    "prop_weighted",
    "prop_exponential",
    "random_polytope",
)

ExtrapolationFit = namedtuple("ExtrapolationFit", ["limit", "slope", "beta", "residual"])

BETA_RANGE = (0.1, 2.0)


class SweepPoint(BaseModel):
    delta: float = Field(gt=0, description="Cap mass delta")
    deficit: float = Field(description="Volume or integral deficit at delta")
    ratio: float = Field(description="deficit / delta^exponent")
    ratio_err: float = Field(ge=0, description="Numerical error bound carried into the ratio")


class ConvergenceReport(BaseModel):
    experiment: str
    label: str = ""
    exponent: float = Field(gt=0, description="Rate exponent, 2/(n+1), 2/(n+2) or 2/(n+s+1)")
    points: List[SweepPoint]
    limit: float = Field(description="Extrapolated limit L of R = L + a*delta^beta")
    slope: float
    beta: Optional[float] = None
    residual: float = Field(ge=0)
    target: float = Field(ge=0, description="constant * affine surface area")
    relative_error: float = Field(ge=0)
    uncertainty: float = Field(ge=0, description="Extrapolation residual relative to the target")
    tolerance: float = Field(gt=0)
    passed: bool
    monotone: bool = True
    wall_clock: float = Field(ge=0, default=0.0)
    budgets: Dict[str, Any] = Field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SweepExperiment:
    """A deficit computation delta -> (deficit, error) plus its rate exponent and analytic target."""
    tag: str
    label: str
    exponent: float
    deficit: Callable[[float, QuadratureSpec], Tuple[float, float]]
    target: Callable[[], float]
    mass_scale: float = 1.0
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.tag not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.tag!r}")


# -- experiment builders -------------------------------------------------------------------------

def body_experiment(body: ConvexBodySpec, w: Optional[WeightSpec] = None, directions: int = 512,
                    quad: QuadratureSpec | None = None, max_workers: int = 1) -> SweepExperiment:
    """vol K - vol K^Phi_delta against c_n as(K) or its weighted counterpart."""
    quad = quad or QuadratureSpec()
    n = body.dim
    w = w or WeightSpec.constant(n)
    if w.ambient_dim != n:
        raise ValueError("weight is defined on a different ambient space")
    weighted = not (w.is_constant and w.constant_value == 1.0)
    grid = DirectionGrid.uniform(n, directions, seed=quad.seed)
    vol = body_volume(body, quad)

    def deficit(delta, q):
        fb = weighted_floating_body(body, w, delta, grid, q, max_workers=max_workers)
        return vol - fb.volume, fb.volume_error

    def target():
        asa = asa_body_weighted(body, w) if weighted else asa_body_p(body, 1.0)
        return constant_c("body_n", n) * asa.value

    return SweepExperiment("eq_weighted_body" if weighted else "eq_floating_body", body.label,
                           2.0 / (n + 1), deficit, target, total_mass(body, w, quad), quad)


def function_experiment(psi: ConvexFunctionSpec, w: WeightSpec, statistic: str = "integral",
                        per_axis: int = 161, quad: QuadratureSpec | None = None,
                        truncation: float = 40.0, max_workers: int = 1) -> SweepExperiment:
    """I_f (statistic="integral") or I_psi (statistic="weighted_l1") against c_{n+1} as_Phi."""
    quad = quad or QuadratureSpec()
    n = psi.dim
    if w.ambient_dim != n + 1:
        raise ValueError("weight must live on R^{n+1}")
    if statistic not in ("integral", "weighted_l1"):
        raise ValueError(f"unknown statistic {statistic!r}")
    exponential = w.kind == "exponential_height"
    if exponential:
        tag = "thm_exponential" if statistic == "integral" else "prop_exponential"
    else:
        tag = "thm_weighted" if statistic == "integral" else "prop_weighted"
    slopes = slope_grid(psi, per_axis, truncation)

    def deficit(delta, q):
        approx = floating_function(psi, w, delta, slopes, q, truncation, max_workers=max_workers)
        di = deficit_integrals(psi, approx, q, truncation)
        return (di.i_f if statistic == "integral" else di.i_psi), di.tail_bound

    def target():
        asa = asa_exponential(psi, truncation) if exponential else asa_weighted(psi, w, truncation)
        return constant_c("func_n1", n) * asa.value

    scale = function_mass_scale(psi, w, truncation)
    return SweepExperiment(tag, psi.label, 2.0 / (n + 2), deficit, target, scale, quad)


def function_mass_scale(psi: ConvexFunctionSpec, w: WeightSpec, truncation: float = 40.0) -> float:
    """Scale of a relative delta0: int e^{-psi} under Phi_e, whose epigraph has finite mass; 1 otherwise."""
    if w.kind != "exponential_height":
        return 1.0
    lo, hi = psi.sublevel_box(truncation)
    panels = [max(4, int(math.ceil((h - l) / 0.5))) for l, h in zip(lo, hi)]
    pts, wts = tensor_gauss(lo, hi, panels, 8)
    return float(np.sum(wts * np.exp(-psi.value(pts))))


def sconcave_experiment(f: SConcaveFunctionSpec, phi: Optional[WeightSpec] = None, directions: int = 512,
                        quad: QuadratureSpec | None = None, max_workers: int = 1) -> SweepExperiment:
    """int (f - f^Phi_delta) against c_{n,s} as^s_phi(f)."""
    quad = quad or QuadratureSpec()
    n, s = f.dim, f.s
    phi = phi or rotational_weight(n, s)
    if phi.kind not in ("constant", "rotational"):
        raise ValueError("weight kind incompatible with experiment")
    if phi.kind == "constant" and phi.ambient_dim != n + s:
        phi = rotational_weight(n, s, phi.eta)
    grid = DirectionGrid.uniform(n + 1, directions, seed=quad.seed)

    def deficit(delta, q):
        approx = sconcave_floating_function(f, phi, delta, grid, q, max_workers=max_workers)
        return sconcave_deficit(f, approx, q), approx.floating.volume_error / ball_volume(s)

    def target():
        return constant_c("sconcave_ns", n, s) * asa_sconcave(f, phi).value

    return SweepExperiment("thm_sconcave", f.label, 2.0 / (n + s + 1), deficit, target, 1.0, quad)


# -- sweeps --------------------------------------------------------------------------------------

def delta_grid(delta0: float, q: float, k: int) -> np.ndarray:
    if not delta0 > 0:
        raise ValueError("delta0 must be > 0")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if k < 3:
        raise ValueError("a sweep needs k >= 3 points")
    return delta0 * q ** np.arange(k)


def delta_sweep(experiment: SweepExperiment, delta0: float = 1e-2, q: float = 0.25, k: int = 5,
                relative: bool = True, max_workers: int = 1, progress: bool = False) -> List[SweepPoint]:
    """Deficits at delta_i = delta0 q^i; delta0 is multiplied by the experiment's mass scale when relative."""
    deltas = delta_grid(delta0 * (experiment.mass_scale if relative else 1.0), q, k)

    def run_one(delta):
        q_delta = replace(experiment.quad, abs_tol=min(experiment.quad.abs_tol, 1e-3 * delta))
        try:
            value, err = experiment.deficit(float(delta), q_delta)
        except (GeometryError, NumericalError, ValueError) as exc:
            return exc
        scale = delta ** experiment.exponent
        return SweepPoint(delta=float(delta), deficit=float(value), ratio=float(value / scale),
                          ratio_err=float(abs(err) / scale))

    bar = tqdm(total=len(deltas), desc=experiment.tag, disable=not progress)

    def task(delta):
        out = run_one(delta)
        bar.update(1)
        return out

    try:
        results = run_concurrently([lambda d=d: task(d) for d in deltas], max_workers)
    finally:
        bar.close()

    points: List[SweepPoint] = []
    for delta, res in zip(deltas, results):
        if isinstance(res, Exception):
            log.error("sweep %s failed at delta=%.3g: %s", experiment.tag, delta, res)
            raise SweepError(f"{experiment.tag} failed at delta={delta:.6g}: {res}", points) from res
        points.append(res)
        log.info("sweep %s delta=%.4g deficit=%.8g ratio=%.8g", experiment.tag, res.delta, res.deficit, res.ratio)
    return points


def is_monotone(points: List[SweepPoint], exponent: float) -> bool:
    """Deficits nonnegative and nondecreasing in delta, up to the carried errors."""
    ordered = sorted(points, key=lambda p: p.delta)
    errs = [p.ratio_err * p.delta ** exponent for p in ordered]
    if any(p.deficit < -e for p, e in zip(ordered, errs)):
        return False
    return all(b.deficit >= a.deficit - ea - eb
               for a, b, ea, eb in zip(ordered, ordered[1:], errs, errs[1:]))


# -- extrapolation -------------------------------------------------------------------------------

def _fit_at(beta: float, deltas: np.ndarray, ratios: np.ndarray) -> Tuple[float, float, float]:
    feature = (deltas ** beta)[:, None]
    model = LinearRegression().fit(feature, ratios)
    resid = ratios - model.predict(feature)
    return float(model.intercept_), float(model.coef_[0]), float(np.sum(resid ** 2))


def _richardson(deltas: np.ndarray, ratios: np.ndarray) -> ExtrapolationFit:
    order = np.argsort(deltas)[::-1]
    d, r = deltas[order][-3:], ratios[order][-3:]
    d1, d2 = r[1] - r[0], r[2] - r[1]
    q = d[1] / d[0]
    if d1 == 0 or not 0 < d2 / d1 < 1:
        # no geometric decay to exploit; the last value is the best estimate
        return ExtrapolationFit(float(r[-1]), 0.0, float("nan"), float(abs(d2)))
    ratio = d2 / d1
    beta = float(np.clip(math.log(ratio) / math.log(q), *BETA_RANGE))
    limit = float(r[2] + d2 * ratio / (1.0 - ratio))
    slope = float((r[2] - limit) / d[2] ** beta)
    return ExtrapolationFit(limit, slope, beta, float(abs(d2 * ratio / (1.0 - ratio))))


def extrapolate(deltas, ratios, grid_size: int = 191) -> ExtrapolationFit:
    """Least-squares fit of R(delta) = L + a delta^beta with beta in [0.1, 2]."""
    deltas = np.asarray(deltas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if len(ratios) < 3 or len(deltas) != len(ratios):
        raise ValueError("extrapolation needs at least 3 (delta, ratio) points")
    if np.ptp(ratios) <= 1e-14 * max(1.0, float(np.max(np.abs(ratios)))):
        return ExtrapolationFit(float(np.mean(ratios)), 0.0, float("nan"), 0.0)

    betas = np.linspace(*BETA_RANGE, grid_size)
    sse = np.array([_fit_at(b, deltas, ratios)[2] for b in betas])
    scale = float(np.sum((ratios - ratios.mean()) ** 2))
    if np.ptp(sse) <= 1e-10 * scale:
        log.debug("flat beta search, falling back to Richardson")
        return _richardson(deltas, ratios)

    i = int(np.argmin(sse))
    step = betas[1] - betas[0]
    lo, hi = max(BETA_RANGE[0], betas[i] - step), min(BETA_RANGE[1], betas[i] + step)
    res = minimize_scalar(lambda b: _fit_at(b, deltas, ratios)[2], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    beta = float(res.x) if res.success and res.fun <= sse[i] else float(betas[i])
    limit, slope, err = _fit_at(beta, deltas, ratios)
    residual = math.sqrt(err / len(ratios))
    log.debug("extrapolated L=%.10g a=%.4g beta=%.4f residual=%.2g", limit, slope, beta, residual)
    return ExtrapolationFit(limit, slope, beta, residual)


def theorem_verdict(experiment: SweepExperiment, points: List[SweepPoint], tolerance: float = 0.02,
                    fit: Optional[ExtrapolationFit] = None, target: Optional[float] = None,
                    wall_clock: float = 0.0, budgets: Optional[Dict[str, Any]] = None) -> ConvergenceReport:
    if not points:
        raise ValueError("no data")
    fit = fit or extrapolate([p.delta for p in points], [p.ratio for p in points])
    target = experiment.target() if target is None else float(target)
    denom = abs(target) if target > 0 else 1.0
    rel = abs(fit.limit - target) / denom
    budgets = dict(budgets or {})
    budgets.setdefault("quadrature", {"method": experiment.quad.method, "points": experiment.quad.points,
                                      "angles": experiment.quad.angles, "samples": experiment.quad.samples,
                                      "abs_tol": experiment.quad.abs_tol, "rel_tol": experiment.quad.rel_tol})
    report = ConvergenceReport(
        experiment=experiment.tag,
        label=experiment.label,
        exponent=experiment.exponent,
        points=list(points),
        limit=fit.limit,
        slope=fit.slope,
        beta=None if math.isnan(fit.beta) else fit.beta,
        residual=fit.residual,
        target=max(target, 0.0),
        relative_error=rel,
        uncertainty=fit.residual / denom,
        tolerance=tolerance,
        passed=bool(rel <= tolerance),
        monotone=is_monotone(points, experiment.exponent),
        wall_clock=wall_clock,
        budgets=budgets,
    )
    log.info("verdict %s L=%.8g target=%.8g rel=%.3g passed=%s", report.experiment, report.limit,
             report.target, report.relative_error, report.passed)
    return report


def run_convergence(experiment: SweepExperiment, delta0: float = 1e-2, q: float = 0.25, k: int = 5,
                    tolerance: float = 0.02, relative: bool = True, max_workers: int = 1,
                    progress: bool = False) -> ConvergenceReport:
    start = time.perf_counter()
    points = delta_sweep(experiment, delta0, q, k, relative=relative, max_workers=max_workers,
                         progress=progress)
    budgets = {"delta0": delta0, "q": q, "k": k, "relative": relative}
    return theorem_verdict(experiment, points, tolerance, wall_clock=time.perf_counter() - start,
                           budgets=budgets)


# -- closed forms and Monte Carlo ----------------------------------------------------------------

def disk_segment_area(d: float) -> float:
    """Area of {y in B^2: y_1 >= d}."""
    return math.acos(d) - d * math.sqrt(max(1.0 - d * d, 0.0))


def disk_closed_form_ratio(delta: float) -> float:
    """(pi - vol B^2_delta) / delta^{2/3}; the floating disk has radius d with segment area delta."""
    if not 0 < delta < math.pi / 2:
        raise GeometryError("delta too large")
    d = brentq(lambda t: disk_segment_area(t) - delta, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return math.pi * (1.0 - d * d) / delta ** (2.0 / 3.0)


def random_polytope_constant(n: int) -> float:
    """Limit of the random-polytope ratio divided by as(K).

    This is c_n times (n^2+n+2)(n^2+1) Gamma((n^2+1)/(n+1)) / ((n+3)(n+1)!),
    a factor of about 1.2036 in the plane.
    """
    factor = ((n * n + n + 2) * (n * n + 1) * math.gamma((n * n + 1) / (n + 1))
              / ((n + 3) * math.factorial(n + 1)))
    return factor * constant_c("body_n", n)


def random_polytope_target(body: ConvexBodySpec) -> float:
    return random_polytope_constant(body.dim) * asa_body_p(body, 1.0).value


def _uniform_points(body: ConvexBodySpec, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = body.bbox
    out = []
    have = 0
    while have < count:
        batch = lo + (hi - lo) * rng.random((max(2 * (count - have), 64), body.dim))
        batch = batch[body.contains(batch)]
        out.append(batch)
        have += len(batch)
    return np.concatenate(out)[:count]


def _hull_volume(body: ConvexBodySpec, N: int, rng: np.random.Generator, attempts: int = 16) -> float:
    for _ in range(attempts):
        pts = _uniform_points(body, N, rng)
        try:
            return float(ConvexHull(pts).volume)
        except QhullError:
            log.debug("degenerate random hull N=%d, resampling", N)
    raise NumericalError("random hull stayed degenerate")


def random_polytope_deficit(body: ConvexBodySpec, N: int, trials: int, seed: int,
                            max_workers: int = 1, progress: bool = False) -> Tuple[float, float]:
    """(vol K - E vol P_N) / (vol K / N)^{2/(n+1)} with a 95% normal half-width."""
    n = body.dim
    if n not in (2, 3):
        raise GeometryError("random polytopes need dimension 2 or 3")
    if N < n + 1:
        raise ValueError("N must be >= dim + 1")
    if trials < 2:
        raise ValueError("need at least 2 trials")
    vol = body_volume(body)
    gens = spawn_generators(seed, trials)
    bar = tqdm(total=trials, desc="random polytopes", disable=not progress)

    def trial(rng):
        v = _hull_volume(body, N, rng)
        bar.update(1)
        return v

    try:
        vols = np.array(run_concurrently([lambda g=g: trial(g) for g in gens], max_workers))
    finally:
        bar.close()
    scale = (vol / N) ** (2.0 / (n + 1))
    deficits = (vol - vols) / scale
    estimate = float(deficits.mean())
    half = float(1.96 * deficits.std(ddof=1) / math.sqrt(trials))
    log.info("random polytopes %s N=%d trials=%d ratio=%.6g +- %.3g", body.label, N, trials, estimate, half)
    return estimate, half
