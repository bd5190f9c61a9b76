from __future__ import annotations

import json
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.floatlab.errors import ConfigError

EXPERIMENT_TAGS = Literal[
    "eq_floating_body",
    "eq_weighted_body",
    "thm_weighted",
    "thm_exponential",
    "thm_sconcave",
    "prop_weighted",
    "prop_exponential",
    "random_polytope",
]

BODY_EXPERIMENTS = ("eq_floating_body", "eq_weighted_body", "random_polytope")
FUNCTION_EXPERIMENTS = ("thm_weighted", "thm_exponential", "prop_weighted", "prop_exponential")
EXPONENTIAL_EXPERIMENTS = ("thm_exponential", "prop_exponential")

# weight kinds each experiment accepts; None means "weight may be omitted"
WEIGHT_KINDS_BY_EXPERIMENT = {
    "eq_floating_body": ("constant",),
    "eq_weighted_body": ("constant", "radial_quadratic"),
    "random_polytope": ("constant",),
    "thm_weighted": ("constant", "radial_quadratic"),
    "prop_weighted": ("constant", "radial_quadratic"),
    "thm_exponential": ("exponential_height",),
    "prop_exponential": ("exponential_height",),
    "thm_sconcave": ("constant", "rotational"),
}


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BodyConfig(StrictModel):
    kind: Literal["ball", "ellipsoid", "box", "hpolytope", "vpolytope", "lp_ball"]
    dim: int = Field(2, ge=1, description="Ambient dimension n")
    center: Optional[List[float]] = None
    radius: float = Field(1.0, gt=0)
    semi_axes: Optional[List[float]] = None
    lo: Optional[List[float]] = None
    hi: Optional[List[float]] = None
    A: Optional[List[List[float]]] = None
    b: Optional[List[float]] = None
    vertices: Optional[List[List[float]]] = None
    p: float = Field(2.0, ge=1, description="Exponent of an l_p ball")
    scales: Optional[List[float]] = None
    label: str = ""

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "BodyConfig":
        required = {
            "ellipsoid": ("semi_axes",),
            "box": ("lo", "hi"),
            "hpolytope": ("A", "b"),
            "vpolytope": ("vertices",),
            "lp_ball": ("scales",),
        }.get(self.kind, ())
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} needs {', '.join(missing)}")
        for name in ("center", "semi_axes", "lo", "hi", "scales"):
            vec = getattr(self, name)
            if vec is not None and len(vec) != self.dim:
                raise ValueError(f"{name} must have length dim={self.dim}")
        if self.A is not None and any(len(row) != self.dim for row in self.A):
            raise ValueError(f"rows of A must have length dim={self.dim}")
        if self.vertices is not None and any(len(v) != self.dim for v in self.vertices):
            raise ValueError(f"vertices must have length dim={self.dim}")
        return self


class FunctionConfig(StrictModel):
    kind: Literal["quadratic", "gauge_square", "piecewise_affine"]
    dim: int = Field(1, ge=1, le=2)
    A: Optional[List[List[float]]] = Field(None, description="Hessian of a quadratic; identity if omitted")
    b: Optional[List[float]] = None
    c: float = 0.0
    body: Optional[BodyConfig] = None
    slopes: Optional[List[List[float]]] = None
    intercepts: Optional[List[float]] = None
    label: str = ""

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "FunctionConfig":
        if self.kind == "gauge_square" and self.body is None:
            raise ValueError("gauge_square needs body")
        if self.kind == "piecewise_affine" and (self.slopes is None or self.intercepts is None):
            raise ValueError("piecewise_affine needs slopes and intercepts")
        if self.body is not None and self.body.dim != self.dim:
            raise ValueError("body dimension differs from function dimension")
        return self


class SConcaveConfig(StrictModel):
    n: int = Field(1, ge=1, le=2)
    s: int = Field(1, ge=1)
    profile: Literal["one_minus_norm_sq", "one_minus_norm"] = "one_minus_norm_sq"


class WeightConfig(StrictModel):
    kind: Literal["constant", "exponential_height", "rotational", "radial_quadratic"] = "constant"
    eta: float = Field(1.0, gt=0, description="Constant value or lower bound of the weight")
    scale: float = Field(1.0, ge=0, description="Quadratic growth of radial_quadratic and quadratic profiles")
    profile: Literal["constant", "quadratic"] = "constant"


class SweepConfig(StrictModel):
    delta0: float = Field(1e-2, gt=0, description="First delta of the sweep")
    q: float = Field(0.25, gt=0, lt=1, description="Geometric ratio")
    k: int = Field(5, ge=3, description="Number of delta points")
    relative: bool = Field(True, description="Scale delta0 by the total weighted mass")
    tolerance: float = Field(0.02, gt=0, description="Relative tolerance of the verdict")


class GridConfig(StrictModel):
    directions: int = Field(512, ge=4)
    slopes_per_axis: Optional[int] = Field(None, ge=3)


class QuadratureConfig(StrictModel):
    method: Literal["exact-closed-form", "tensor-grid", "monte-carlo"] = "exact-closed-form"
    points: int = Field(48, ge=2)
    angles: int = Field(48, ge=4)
    samples: int = Field(200_000, ge=1)
    abs_tol: float = Field(1e-8, gt=0)
    rel_tol: float = Field(1e-6, gt=0)


class RandomPolytopeConfig(StrictModel):
    N: int = Field(1000, ge=3, description="Points per random hull")
    trials: int = Field(200, ge=2)
    tolerance: float = Field(0.10, gt=0, description="Relative tolerance of the random-polytope verdict")


class OutputConfig(StrictModel):
    out_dir: Optional[str] = None
    formats: Optional[List[Literal["csv", "json", "svg"]]] = None
    name: Optional[str] = None


class ExperimentConfig(StrictModel):
    experiment: EXPERIMENT_TAGS
    body: Optional[BodyConfig] = None
    function: Optional[FunctionConfig] = None
    sconcave: Optional[SConcaveConfig] = None
    weight: Optional[WeightConfig] = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    random_polytope: RandomPolytopeConfig = Field(default_factory=RandomPolytopeConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: Optional[int] = Field(None, ge=0)
    truncation: float = Field(40.0, gt=0, description="Truncation level T of the region {psi <= min psi + T}")
    max_workers: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_experiment(self) -> "ExperimentConfig":
        if self.experiment in BODY_EXPERIMENTS and self.body is None:
            raise ValueError(f"{self.experiment} needs a body section")
        if self.experiment in FUNCTION_EXPERIMENTS and self.function is None:
            raise ValueError(f"{self.experiment} needs a function section")
        if self.experiment == "thm_sconcave" and self.sconcave is None:
            raise ValueError("thm_sconcave needs an sconcave section")
        if self.weight is not None and self.weight.kind not in WEIGHT_KINDS_BY_EXPERIMENT[self.experiment]:
            raise ValueError("weight kind incompatible with experiment")
        if self.experiment == "random_polytope" and self.body is not None and self.body.dim not in (2, 3):
            raise ValueError("random_polytope needs a body of dimension 2 or 3")
        uses_mc = self.quadrature.method == "monte-carlo" or self.experiment == "random_polytope"
        if uses_mc and self.seed is None:
            raise ValueError("seed is required when Monte Carlo is used")
        return self

    def effective_weight(self) -> WeightConfig:
        if self.weight is not None:
            return self.weight
        if self.experiment in EXPONENTIAL_EXPERIMENTS:
            return WeightConfig(kind="exponential_height")
        return WeightConfig()


def _format_errors(exc: ValidationError) -> List[str]:
    out = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "config"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        out.append(f"{where}: {msg}")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON experiment document; every problem is reported as "<dotted.field>: <message>"."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})")
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc))


def serialize_config(cfg: ExperimentConfig) -> str:
    return cfg.model_dump_json(indent=2)
