"""One-dimensional marginal shapes with closed-form moments.

Jump measures are assembled from normalized marginals taken from a small
family of shapes: point masses, uniform densities and truncated power
densities c/x^alpha.  Each shape knows its restricted moments
E[X^k; lo < X <= hi] in closed form for the k used by the model
(k in {-2,-1,1,2}), so subordinator/balance checks and truncation
compensation are exact rather than quadrature-based.  Quadrature is kept
as an independent cross-check, see ``integrate``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad


class ShapeError(ValueError):
    """Raised for non-normalizable or malformed shape parameters."""


@dataclass(frozen=True)
class PointShape:
    """Unit point mass at ``x``."""

    x: float

    def __post_init__(self):
        if not (self.x >= 0.0) or not math.isfinite(self.x):
            raise ShapeError(f"point shape requires finite x >= 0, got {self.x}")

    @property
    def support(self) -> tuple[float, float]:
        return (self.x, self.x)

    def restricted_moment(self, k: int, lo: float, hi: float) -> float:
        # interval convention: (lo, hi]
        if lo < self.x <= hi:
            return self.x**k if (self.x > 0.0 or k >= 0) else math.inf
        return 0.0

    def moment(self, k: int) -> float:
        return self.restricted_moment(k, -math.inf, math.inf)

    def mass_below(self, hi: float) -> float:
        return 1.0 if self.x <= hi else 0.0

    def mass_at(self, x: float) -> float:
        return 1.0 if self.x == x else 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.x)

    def conditional_above(self, lo: float) -> "PointShape | None":
        return self if self.x > lo else None

    def integrate(self, h: Callable[[float], float]) -> tuple[float, float]:
        return h(self.x), 0.0

    def to_json(self) -> dict:
        return {"kind": "point", "x": self.x}


@dataclass(frozen=True)
class UniformShape:
    """Uniform density on [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b) or not math.isfinite(self.b):
            raise ShapeError(f"uniform shape requires 0 <= a < b, got [{self.a}, {self.b}]")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    def restricted_moment(self, k: int, lo: float, hi: float) -> float:
        lo = max(lo, self.a)
        hi = min(hi, self.b)
        if hi <= lo:
            return 0.0
        if k < 0 and lo == 0.0:
            return math.inf
        w = self.b - self.a
        if k == -1:
            return math.log(hi / lo) / w
        p = k + 1
        return (hi**p - lo**p) / (p * w)

    def moment(self, k: int) -> float:
        return self.restricted_moment(k, -math.inf, math.inf)

    def mass_below(self, hi: float) -> float:
        if hi <= self.a:
            return 0.0
        return min(1.0, (hi - self.a) / (self.b - self.a))

    def mass_at(self, x: float) -> float:
        return 0.0

    def pdf(self, x):
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.a + (self.b - self.a) * rng.random(size)

    def conditional_above(self, lo: float) -> "UniformShape | None":
        if lo >= self.b:
            return None
        return UniformShape(max(self.a, lo), self.b)

    def integrate(self, h: Callable[[float], float]) -> tuple[float, float]:
        val, err = quad(lambda x: h(x) / (self.b - self.a), self.a, self.b, limit=200)
        return val, err

    def to_json(self) -> dict:
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PowerShape:
    """Normalized density proportional to x^(-alpha) on [a, b].

    ``a == 0`` is only normalizable for ``alpha < 1``; anything else is
    rejected with a diagnostic.
    """

    alpha: float
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b) or not math.isfinite(self.b):
            raise ShapeError(f"power shape requires 0 <= a < b, got [{self.a}, {self.b}]")
        if self.a == 0.0 and self.alpha >= 1.0:
            raise ShapeError(
                f"power shape x^(-{self.alpha}) on [0, {self.b}] is not normalizable: "
                "alpha >= 1 needs a > 0"
            )

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    def _norm(self) -> float:
        # c with integral of c*x^(-alpha) over [a,b] equal to 1
        if self.alpha == 1.0:
            return 1.0 / math.log(self.b / self.a)
        p = 1.0 - self.alpha
        return p / (self.b**p - self.a**p)

    def restricted_moment(self, k: int, lo: float, hi: float) -> float:
        lo = max(lo, self.a)
        hi = min(hi, self.b)
        if hi <= lo:
            return 0.0
        c = self._norm()
        p = k - self.alpha + 1.0
        if lo == 0.0 and p <= 0.0:
            return math.inf
        if p == 0.0:
            return c * math.log(hi / lo)
        return c * (hi**p - lo**p) / p

    def moment(self, k: int) -> float:
        return self.restricted_moment(k, -math.inf, math.inf)

    def mass_below(self, hi: float) -> float:
        if hi <= self.a:
            return 0.0
        return min(1.0, self.restricted_moment(0, self.a, hi))

    def mass_at(self, x: float) -> float:
        return 0.0

    def pdf(self, x):
        c = self._norm()
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            vals = c * x ** (-self.alpha)
        return np.where((x >= self.a) & (x <= self.b), vals, 0.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return self.ppf(u)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        if self.alpha == 1.0:
            return self.a * (self.b / self.a) ** u
        p = 1.0 - self.alpha
        return (self.a**p + u * (self.b**p - self.a**p)) ** (1.0 / p)

    def conditional_above(self, lo: float) -> "PowerShape | None":
        if lo >= self.b:
            return None
        return PowerShape(self.alpha, max(self.a, lo), self.b)

    def integrate(self, h: Callable[[float], float]) -> tuple[float, float]:
        c = self._norm()
        val, err = quad(lambda x: h(x) * c * x ** (-self.alpha), self.a, self.b, limit=200)
        return val, err

    def to_json(self) -> dict:
        return {"kind": "power", "alpha": self.alpha, "a": self.a, "b": self.b}


Shape = PointShape | UniformShape | PowerShape


def shape_from_json(obj: dict) -> Shape:
    kind = obj.get("kind")
    if kind == "point":
        return PointShape(float(obj["x"]))
    if kind == "uniform":
        return UniformShape(float(obj["a"]), float(obj["b"]))
    if kind == "power":
        return PowerShape(float(obj["alpha"]), float(obj["a"]), float(obj["b"]))
    raise ShapeError(f"unknown shape kind {kind!r}")
