"""Weights Phi on R^d: constants, e^{-t} on epigraphs, custom oracles and the rotational
weights that s-concave lifts carry down to R^{n+1}."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma

from src.floatlab.numerics import gauss_legendre
from src.floatlab.utils import as_points

log = logging.getLogger(__name__)

WEIGHT_KINDS = ("constant", "exponential_height", "rotational", "custom")

# (m, d) points -> (m,) values
WeightOracle = Callable[[np.ndarray], np.ndarray]
# (x: (m, n), r: (m,)) -> (m,) values
RotationalProfile = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class WeightSpec:
    """A strictly positive weight Phi on R^d.

    `eta` is the declared uniform lower bound: the constant itself for the
    constant kind, 0 for the exponential kind ("no uniform lower bound").
    """
    ambient_dim: int
    kind: str = "constant"
    eta: float = 1.0
    s: int = 0
    profile: Optional[RotationalProfile] = None
    oracle: Optional[WeightOracle] = None
    continuous: bool = True
    label: str = ""

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be >= 1")
        if self.kind == "constant" and not self.eta > 0:
            raise ValueError("constant weight needs eta > 0")
        if self.kind == "rotational":
            if self.profile is None or not 1 <= self.s < self.ambient_dim:
                raise ValueError("rotational weight needs a profile and 1 <= s < ambient_dim")
        if self.kind == "custom" and self.oracle is None:
            raise ValueError("custom weight needs an oracle")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    @classmethod
    def constant(cls, ambient_dim: int, eta: float = 1.0) -> "WeightSpec":
        return cls(ambient_dim=ambient_dim, kind="constant", eta=float(eta), label=f"const({eta:g})")

    @classmethod
    def exponential_height(cls, ambient_dim: int) -> "WeightSpec":
        return cls(ambient_dim=ambient_dim, kind="exponential_height", eta=0.0, label="exp_height")

    @classmethod
    def rotational(cls, ambient_dim: int, s: int, profile: RotationalProfile,
                   eta: float = 0.0, label: str = "rotational") -> "WeightSpec":
        return cls(ambient_dim=ambient_dim, kind="rotational", s=int(s), profile=profile,
                   eta=float(eta), label=label)

    @classmethod
    def custom(cls, ambient_dim: int, oracle: WeightOracle, eta: float = 0.0,
               continuous: bool = True, label: str = "custom") -> "WeightSpec":
        return cls(ambient_dim=ambient_dim, kind="custom", oracle=oracle, eta=float(eta),
                   continuous=continuous, label=label)

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        return self.kind == "rotational" and getattr(self.profile, "constant_value", None) is not None

    @property
    def constant_value(self) -> float:
        if self.kind == "constant":
            return self.eta
        return float(self.profile.constant_value)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at points of shape (..., ambient_dim)."""
        z = np.asarray(z, dtype=float)
        lead = z.shape[:-1]
        flat = z.reshape(-1, self.ambient_dim)
        if self.kind == "constant":
            vals = np.full(flat.shape[0], self.eta)
        elif self.kind == "exponential_height":
            vals = np.exp(-flat[:, -1])
        elif self.kind == "rotational":
            n = self.ambient_dim - self.s
            vals = np.asarray(self.profile(flat[:, :n], np.linalg.norm(flat[:, n:], axis=1)), dtype=float)
        else:
            vals = np.asarray(self.oracle(flat), dtype=float)
        return vals.reshape(lead)

    def with_eta(self, eta: float) -> "WeightSpec":
        if self.kind != "constant":
            raise ValueError("only constant weights can be rescaled")
        return WeightSpec.constant(self.ambient_dim, eta)


class ConstantProfile:
    """phi(x, r) = eta; rotational weights built from it are treated as constant."""

    def __init__(self, eta: float = 1.0):
        self.constant_value = float(eta)

    def __call__(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        return np.full(np.shape(r), self.constant_value)


class QuadraticProfile:
    """phi(x, r) = eta * (1 + scale * (|x|^2 + r^2))."""

    def __init__(self, eta: float = 1.0, scale: float = 1.0):
        self.eta = float(eta)
        self.scale = float(scale)

    def __call__(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        return self.eta * (1.0 + self.scale * (np.sum(np.asarray(x) ** 2, axis=-1) + np.asarray(r) ** 2))


def weight_eval(w: WeightSpec, z) -> float | np.ndarray:
    pts = as_points(z, w.ambient_dim)
    vals = w.evaluate(pts)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("invalid weight")
    return float(vals[0]) if np.ndim(z) <= 1 and pts.shape[0] == 1 else vals


def exp_height_segment_mass(a, b):
    """Integral of e^{-t} over [a, b]; b may be +inf."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a > b):
        raise ValueError("segment is reversed: a > b")
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(np.isinf(b), np.exp(-a), -np.exp(-a) * np.expm1(-(b - a)))
    return float(out) if out.ndim == 0 else out


def segment_mass(w: WeightSpec, x: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 order: int = 8) -> np.ndarray:
    """Integral of Phi(x, y) for y in [lower, upper] along the last coordinate.

    x has shape (..., d-1); lower/upper have shape (...). Closed form for the
    constant and exponential kinds, Gauss-Legendre otherwise.
    """
    length = np.clip(upper - lower, 0.0, None)
    if w.kind == "constant":
        return w.eta * length
    if w.kind == "exponential_height":
        return exp_height_segment_mass(lower, np.maximum(lower, upper))
    t, wt = gauss_legendre(order)
    heights = lower[..., None] + length[..., None] * t
    xs = np.broadcast_to(x[..., None, :], heights.shape + (x.shape[-1],))
    pts = np.concatenate([xs, heights[..., None]], axis=-1)
    return length * np.sum(w.evaluate(pts) * wt, axis=-1)


def induced_meridian_weight(phi: WeightSpec, g: Callable[[np.ndarray], np.ndarray],
                            order: int = 16) -> WeightSpec:
    """Weight on the (n+1)-dim meridian section of a rotational body in R^{n+s}.

    w_s(x, t) integrates phi over the (s-1)-ball of radius sqrt(g(x)^2 - t^2)
    orthogonal to the meridian plane, so that meridian cap masses equal cap
    masses of the full body of revolution.
    """
    if phi.kind not in ("rotational", "constant"):
        raise ValueError("weight kind incompatible with experiment")
    s = phi.s if phi.kind == "rotational" else 1
    n = phi.ambient_dim - s
    if s == 1:
        if phi.is_constant:
            return WeightSpec.constant(n + 1, phi.constant_value)
        return WeightSpec.custom(
            n + 1, lambda z: phi.profile(z[:, :n], np.abs(z[:, n])), eta=phi.eta, label=phi.label)

    sphere_area = 2.0 * np.pi ** ((s - 1) / 2.0) / gamma((s - 1) / 2.0)
    eta_const = phi.constant_value if phi.is_constant else None
    nodes, weights = gauss_legendre(order)

    def oracle(z: np.ndarray) -> np.ndarray:
        x, t = z[:, :n], z[:, n]
        reach = np.sqrt(np.clip(g(x) ** 2 - t ** 2, 0.0, None))
        if eta_const is not None:
            ball_vol = sphere_area / (s - 1)
            return eta_const * ball_vol * reach ** (s - 1)
        r = reach[:, None] * nodes[None, :]
        vals = phi.profile(np.repeat(x, order, axis=0), np.sqrt(t[:, None] ** 2 + r ** 2).ravel())
        vals = vals.reshape(r.shape) * r ** (s - 2)
        return sphere_area * reach * np.sum(vals * weights, axis=1)

    # vanishes on the boundary, so no uniform lower bound
    return WeightSpec.custom(n + 1, oracle, eta=0.0, label=f"meridian[{phi.label}]")
