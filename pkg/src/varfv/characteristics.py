"""Events, jump-measure families and characteristics.

A characteristic is a drift pair together with a jump measure on the event
space ([0,1] x [0,+inf)) minus the two trivial corner points.  Every event
(z_d, z_b) kills the proportion z_d of the population and adds offspring
mass z_b of one parental type.  Valid characteristics satisfy

* nonnegative drift,
* the subordinator condition (finite first moments of the jump measure),
* the balance condition: mean death pressure equals mean birth mass.

Jump measures are represented by parametric families with closed-form
moments so all three conditions are checkable exactly: finite lists of
weighted point events, product measures with normalized marginal shapes,
and diagonal families with density d(Lambda)/u^2 placed on z_d = z_b = u.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from scipy.integrate import quad

from .rng import derive_key, event_keys, event_uniform, event_uniforms, make_generator
from .shapes import PointShape, PowerShape, Shape, UniformShape, shape_from_json


class CharacteristicError(ValueError):
    """Malformed or unusable characteristic / event parameters."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""


@dataclass(frozen=True)
class Event:
    """A single reproduction event: kill proportion z_d, add mass z_b.

    The corner points (0,0) (no effect) and (1,0) (extinction) are outside
    the event space and rejected at construction.
    """

    z_d: float
    z_b: float

    def __post_init__(self):
        if not (0.0 <= self.z_d <= 1.0):
            raise CharacteristicError(f"z_d must lie in [0,1], got {self.z_d}")
        if not (self.z_b >= 0.0) or not math.isfinite(self.z_b):
            raise CharacteristicError(f"z_b must be finite and >= 0, got {self.z_b}")
        if self.z_b == 0.0 and self.z_d in (0.0, 1.0):
            raise CharacteristicError(
                f"event ({self.z_d}, {self.z_b}) is excluded from the event space"
            )


@dataclass(frozen=True)
class Drift:
    """Continuous death rate (per unit mass) and birth mass rate."""

    gamma_d: float
    gamma_b: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma_d) and math.isfinite(self.gamma_b)):
            raise CharacteristicError("drift entries must be finite")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


@dataclass(frozen=True)
class TruncationReport:
    """What a finite-activity truncation removed and compensated for."""

    epsilon: float
    dropped_rate: float
    drift_compensation: Drift
    first_moment_error: tuple[float, float]

    @property
    def empty(self) -> bool:
        return self.dropped_rate == 0.0


# ---------------------------------------------------------------------------
# jump measure families


@dataclass(frozen=True)
class PointMassList:
    """Finite list of (rate, Event) atoms."""

    atoms: tuple[tuple[float, Event], ...]

    def __post_init__(self):
        for rate, ev in self.atoms:
            if not (rate > 0.0) or not math.isfinite(rate):
                raise CharacteristicError(f"atom rate must be positive and finite, got {rate}")
            if not isinstance(ev, Event):
                raise CharacteristicError("atoms must carry Event marks")

    def total_rate(self) -> float:
        return float(sum(r for r, _ in self.atoms))

    def moment_zd(self) -> float:
        return float(sum(r * ev.z_d for r, ev in self.atoms))

    def moment_zb(self) -> float:
        return float(sum(r * ev.z_b for r, ev in self.atoms))

    def moment_zb2(self) -> float:
        return float(sum(r * ev.z_b**2 for r, ev in self.atoms))

    def pi_d_mass_at_one(self) -> float:
        return float(sum(r for r, ev in self.atoms if ev.z_d == 1.0))

    def excluded_point_mass(self) -> float:
        return 0.0  # Event construction already excludes the corner points

    def truncate(self, eps: float):
        kept = tuple(a for a in self.atoms if max(a[1].z_d, a[1].z_b) > eps)
        dropped = [a for a in self.atoms if max(a[1].z_d, a[1].z_b) <= eps]
        dropped_rate = sum(r for r, _ in dropped)
        dd = sum(r * ev.z_d for r, ev in dropped)
        db = sum(r * ev.z_b for r, ev in dropped)
        return PointMassList(kept), float(dropped_rate), float(dd), float(db)

    def scale_births(self, s: float) -> "PointMassList":
        return PointMassList(
            tuple((r, Event(ev.z_d, ev.z_b * s)) for r, ev in self.atoms)
        )

    def sample(self, rng: np.random.Generator, size: int):
        if not self.atoms:
            return np.empty(0), np.empty(0)
        rates = np.array([r for r, _ in self.atoms])
        idx = rng.choice(len(self.atoms), size=size, p=rates / rates.sum())
        zd = np.array([ev.z_d for _, ev in self.atoms])[idx]
        zb = np.array([ev.z_b for _, ev in self.atoms])[idx]
        return zd, zb

    def integrate(self, g: Callable[[float, float], float]):
        return float(sum(r * g(ev.z_d, ev.z_b) for r, ev in self.atoms)), 0.0

    def to_json(self) -> dict:
        return {
            "family": "point_mass_list",
            "atoms": [[r, ev.z_d, ev.z_b] for r, ev in self.atoms],
        }


@dataclass(frozen=True)
class ProductMeasure:
    """total_rate times a product of normalized marginal shapes.

    ``corner_cut > 0`` restricts the measure to max(z_d, z_b) > corner_cut;
    truncation returns the same family with a larger cut.
    """

    total_rate_param: float
    shape_d: Shape
    shape_b: Shape
    corner_cut: float = 0.0

    def __post_init__(self):
        if not (self.total_rate_param >= 0.0) or not math.isfinite(self.total_rate_param):
            raise CharacteristicError("product measure needs a finite total_rate >= 0")
        lo, hi = self.shape_d.support
        if lo < 0.0 or hi > 1.0:
            raise CharacteristicError(f"z_d marginal must live in [0,1], support [{lo}, {hi}]")
        if self.shape_b.support[0] < 0.0:
            raise CharacteristicError("z_b marginal must live in [0,+inf)")

    def _dropped_box(self) -> tuple[float, float, float, float, float]:
        # mass and first/second partial moments of the removed corner box
        e = self.corner_cut
        if e <= 0.0:
            return 0.0, 0.0, 0.0, 0.0, 0.0
        fd = self.shape_d.mass_below(e)
        fb = self.shape_b.mass_below(e)
        md = self.shape_d.restricted_moment(1, -1.0, e)
        mb = self.shape_b.restricted_moment(1, -1.0, e)
        mb2 = self.shape_b.restricted_moment(2, -1.0, e)
        return fd * fb, md * fb, fd * mb, fd * mb2, fd

    def total_rate(self) -> float:
        box, *_ = self._dropped_box()
        return self.total_rate_param * (1.0 - box)

    def moment_zd(self) -> float:
        _, md_box, _, _, _ = self._dropped_box()
        return self.total_rate_param * (self.shape_d.moment(1) - md_box)

    def moment_zb(self) -> float:
        _, _, mb_box, _, _ = self._dropped_box()
        return self.total_rate_param * (self.shape_b.moment(1) - mb_box)

    def moment_zb2(self) -> float:
        _, _, _, mb2_box, _ = self._dropped_box()
        return self.total_rate_param * (self.shape_b.moment(2) - mb2_box)

    def pi_d_mass_at_one(self) -> float:
        if self.shape_d.mass_at(1.0) == 0.0:
            return 0.0
        kept_b = 1.0 if self.corner_cut < 1.0 else 1.0 - self.shape_b.mass_below(self.corner_cut)
        return self.total_rate_param * self.shape_d.mass_at(1.0) * kept_b

    def excluded_point_mass(self) -> float:
        mass = self.shape_b.mass_at(0.0) * (
            self.shape_d.mass_at(0.0) + self.shape_d.mass_at(1.0)
        )
        return self.total_rate_param * mass

    def truncate(self, eps: float):
        if eps <= self.corner_cut:
            return self, 0.0, 0.0, 0.0
        before = (self.total_rate(), self.moment_zd(), self.moment_zb())
        out = replace(self, corner_cut=eps)
        after = (out.total_rate(), out.moment_zd(), out.moment_zb())
        return out, before[0] - after[0], before[1] - after[1], before[2] - after[2]

    def scale_births(self, s: float) -> "ProductMeasure":
        if self.corner_cut > 0.0:
            raise CharacteristicError("rescale a product family before truncating it")
        return replace(self, shape_b=_scale_shape(self.shape_b, s))

    def sample(self, rng: np.random.Generator, size: int):
        if self.corner_cut <= 0.0:
            return self.shape_d.sample(rng, size), self.shape_b.sample(rng, size)
        keep_prob = self.total_rate() / self.total_rate_param if self.total_rate_param else 0.0
        if keep_prob < 1e-6:
            raise CharacteristicError("truncated product keeps too little mass to sample")
        zd = np.empty(size)
        zb = np.empty(size)
        have = 0
        while have < size:
            want = size - have
            batch = max(32, int(1.2 * want / keep_prob))
            cd = self.shape_d.sample(rng, batch)
            cb = self.shape_b.sample(rng, batch)
            ok = np.maximum(cd, cb) > self.corner_cut
            take = min(int(ok.sum()), want)
            zd[have : have + take] = cd[ok][:take]
            zb[have : have + take] = cb[ok][:take]
            have += take
        return zd, zb

    def integrate(self, g: Callable[[float, float], float]):
        e = self.corner_cut

        def inner(zd: float):
            if e > 0.0 and zd <= e:
                cond = self.shape_b.conditional_above(e)
                if cond is None:
                    return 0.0, 0.0
                kept = 1.0 - self.shape_b.mass_below(e)
                v, err = cond.integrate(lambda zb: g(zd, zb))
                return kept * v, kept * err

            return self.shape_b.integrate(lambda zb: g(zd, zb))

        if isinstance(self.shape_d, PointShape):
            val, err = inner(self.shape_d.x)
        else:
            a, b = self.shape_d.support
            pts = [e] if a < e < b else None
            val, err = quad(
                lambda zd: inner(zd)[0] * self.shape_d.pdf(zd),
                a,
                b,
                points=pts,
                limit=200,
            )
        return self.total_rate_param * val, self.total_rate_param * err

    def to_json(self) -> dict:
        return {
            "family": "product",
            "total_rate": self.total_rate_param,
            "z_d": self.shape_d.to_json(),
            "z_b": self.shape_b.to_json(),
            "corner_cut": self.corner_cut,
        }


@dataclass(frozen=True)
class DiagonalLambda:
    """Impact measure placed on the diagonal: dPi(u) = dLambda(u)/u^2.

    ``shape`` is the normalized shape of Lambda restricted to (0,1] and
    ``lambda_mass`` its total mass there.  An atom of Lambda at zero is
    recorded as metadata only: it corresponds to the diffusive part of the
    classical limit and produces no simulable jumps.  ``lo`` restricts to
    u > lo (the truncated version of the family); ``birth_scale`` maps the
    diagonal to (u, s*u), which rescaling to unit capacity may need.
    """

    shape: Shape
    lambda_mass: float = 1.0
    atom_at_zero: float = 0.0
    lo: float = 0.0
    birth_scale: float = 1.0

    def __post_init__(self):
        a, b = self.shape.support
        if a < 0.0 or b > 1.0 or (isinstance(self.shape, PointShape) and self.shape.x == 0.0):
            raise CharacteristicError("diagonal shape must live in (0,1]")
        if not (self.lambda_mass > 0.0):
            raise CharacteristicError("lambda_mass must be positive")
        if not (0.0 <= self.lo < 1.0):
            raise CharacteristicError("diagonal cut must lie in [0,1)")
        if not (self.birth_scale > 0.0):
            raise CharacteristicError("birth_scale must be positive")

    def _lam(self, k: int, lo: float) -> float:
        # integral of u^k dLambda over (lo, 1]
        return self.lambda_mass * self.shape.restricted_moment(k, lo, 1.0)

    def total_rate(self) -> float:
        return self._lam(-2, self.lo)

    def moment_zd(self) -> float:
        return self._lam(-1, self.lo)

    def moment_zb(self) -> float:
        return self.birth_scale * self._lam(-1, self.lo)

    def moment_zb2(self) -> float:
        return self.birth_scale**2 * self._lam(0, self.lo)

    def pi_d_mass_at_one(self) -> float:
        return self.lambda_mass * self.shape.mass_at(1.0)  # dLambda(1)/1^2

    def excluded_point_mass(self) -> float:
        return 0.0  # diagonal events always have z_b > 0

    def truncate(self, eps: float):
        # events are (u, s*u); max coordinate exceeds eps iff u > eps/max(1,s)
        cut = eps / max(1.0, self.birth_scale)
        if cut <= self.lo:
            return self, 0.0, 0.0, 0.0
        dropped_rate = self._lam(-2, self.lo) - self._lam(-2, cut)
        dropped_d = self._lam(-1, self.lo) - self._lam(-1, cut)
        out = replace(self, lo=cut)
        return out, dropped_rate, dropped_d, self.birth_scale * dropped_d

    def scale_births(self, s: float) -> "DiagonalLambda":
        return replace(self, birth_scale=self.birth_scale * s)

    def sample(self, rng: np.random.Generator, size: int):
        if math.isinf(self.total_rate()):
            raise CharacteristicError("diagonal family has infinite rate; truncate first")
        sampler = _diagonal_sampler(self.shape, self.lo)
        u = sampler.sample(rng, size)
        return u, self.birth_scale * u

    def integrate(self, g: Callable[[float, float], float]):
        s = self.birth_scale
        if isinstance(self.shape, PointShape):
            u = self.shape.x
            if u <= self.lo:
                return 0.0, 0.0
            return self.lambda_mass * g(u, s * u) / u**2, 0.0
        a, b = self.shape.support
        a = max(a, self.lo)
        if a >= b:
            return 0.0, 0.0
        val, err = quad(
            lambda u: g(u, s * u) * self.shape.pdf(u) / u**2, a, b, limit=200
        )
        return self.lambda_mass * val, self.lambda_mass * err

    def to_json(self) -> dict:
        return {
            "family": "diagonal",
            "shape": self.shape.to_json(),
            "lambda_mass": self.lambda_mass,
            "atom_at_zero": self.atom_at_zero,
            "lo": self.lo,
            "birth_scale": self.birth_scale,
        }


JumpMeasureSpec = PointMassList | ProductMeasure | DiagonalLambda


def _scale_shape(shape: Shape, s: float) -> Shape:
    if isinstance(shape, PointShape):
        return PointShape(shape.x * s)
    if isinstance(shape, UniformShape):
        return UniformShape(shape.a * s, shape.b * s)
    if isinstance(shape, PowerShape):
        return PowerShape(shape.alpha, shape.a * s, shape.b * s)
    raise CharacteristicError(f"cannot scale shape {shape!r}")


def _diagonal_sampler(shape: Shape, lo: float) -> Shape:
    """Normalized law of u under u^(-2) dLambda restricted to u > lo."""
    if isinstance(shape, PointShape):
        if shape.x <= lo:
            raise CharacteristicError("diagonal point atom removed by truncation")
        return shape
    if isinstance(shape, UniformShape):
        return PowerShape(2.0, max(shape.a, lo), shape.b)
    if isinstance(shape, PowerShape):
        return PowerShape(shape.alpha + 2.0, max(shape.a, lo), shape.b)
    raise CharacteristicError(f"cannot sample diagonal over shape {shape!r}")


def jump_from_json(obj: dict) -> JumpMeasureSpec:
    fam = obj.get("family")
    if fam == "point_mass_list":
        return PointMassList(
            tuple((float(r), Event(float(zd), float(zb))) for r, zd, zb in obj["atoms"])
        )
    if fam == "product":
        return ProductMeasure(
            float(obj["total_rate"]),
            shape_from_json(obj["z_d"]),
            shape_from_json(obj["z_b"]),
            float(obj.get("corner_cut", 0.0)),
        )
    if fam == "diagonal":
        return DiagonalLambda(
            shape_from_json(obj["shape"]),
            float(obj.get("lambda_mass", 1.0)),
            float(obj.get("atom_at_zero", 0.0)),
            float(obj.get("lo", 0.0)),
            float(obj.get("birth_scale", 1.0)),
        )
    raise CharacteristicError(f"unknown jump family {fam!r}")


ZERO_JUMPS = PointMassList(())


# ---------------------------------------------------------------------------
# characteristics


@dataclass(frozen=True)
class Characteristic:
    """Drift pair plus jump measure; fully parametrizes the model."""

    drift: Drift
    jump: JumpMeasureSpec = ZERO_JUMPS
    balance_tol: float = 1e-9

    @property
    def feller(self) -> bool:
        """True iff the death marginal puts no atom on full replacement."""
        return self.jump.pi_d_mass_at_one() == 0.0

    def to_json(self) -> dict:
        return {
            "gamma": [self.drift.gamma_d, self.drift.gamma_b],
            "jump": self.jump.to_json(),
            "balance_tol": self.balance_tol,
        }

    @staticmethod
    def from_json(obj: dict) -> "Characteristic":
        gd, gb = obj["gamma"]
        return Characteristic(
            Drift(float(gd), float(gb)),
            jump_from_json(obj["jump"]),
            float(obj.get("balance_tol", 1e-9)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @staticmethod
    def loads(text: str) -> "Characteristic":
        return Characteristic.from_json(json.loads(text))


def validate(c: Characteristic) -> ValidationReport:
    """Check drift sign, subordinator, balance and excluded corner points."""
    violations: list[str] = []
    if c.drift.gamma_d < 0.0 or c.drift.gamma_b < 0.0:
        violations.append(f"drift: gamma = ({c.drift.gamma_d}, {c.drift.gamma_b}) not >= 0")
    md = c.jump.moment_zd()
    mb = c.jump.moment_zb()
    if math.isinf(md):
        violations.append("subordinator: integral of z_d dPi is infinite")
    if math.isinf(mb):
        violations.append("subordinator: integral of z_b dPi is infinite")
    if math.isfinite(md) and math.isfinite(mb):
        lhs = c.drift.gamma_d + md
        rhs = c.drift.gamma_b + mb
        if abs(lhs - rhs) > c.balance_tol:
            violations.append(f"balance: lhs {lhs:.12g} != rhs {rhs:.12g}")
    excluded = c.jump.excluded_point_mass()
    if excluded > 0.0:
        violations.append(f"jump measure puts rate {excluded:.12g} on excluded corner points")
    return ValidationReport(not violations, tuple(violations))


def carrying_capacity(c: Characteristic) -> float:
    """Ratio of total birth mass rate to total death pressure."""
    md = c.jump.moment_zd()
    mb = c.jump.moment_zb()
    if math.isinf(md) or math.isinf(mb):
        raise CharacteristicError("carrying capacity needs finite first moments")
    denom = c.drift.gamma_d + md
    if denom <= 0.0:
        raise CharacteristicError("no death pressure: gamma_d + integral of z_d dPi is zero")
    return (c.drift.gamma_b + mb) / denom


def rescale_to_unit_capacity(c: Characteristic) -> Characteristic:
    """Map (gamma, Pi) so the rescaled system has carrying capacity one.

    Birth masses (drift and jump images) are divided by the capacity; death
    entries are untouched.
    """
    k = carrying_capacity(c)
    if k == 1.0:
        return c
    drift = Drift(c.drift.gamma_d, c.drift.gamma_b / k)
    return Characteristic(drift, c.jump.scale_births(1.0 / k), c.balance_tol)


def effective_impact(n: float, z: Event) -> float:
    """Fraction of the post-event population made of new offspring."""
    if not (n > 0.0):
        raise CharacteristicError(f"population size must be positive, got {n}")
    denom = (1.0 - z.z_d) * n + z.z_b
    if denom <= 0.0:
        raise CharacteristicError("event would extinguish the population")
    return z.z_b / denom


def truncate(c: Characteristic, eps: float) -> tuple[Characteristic, TruncationReport]:
    """Restrict the jump measure to max(z_d, z_b) > eps and compensate.

    The removed mean death/birth mass is added to the drift so the balance
    condition is preserved exactly.  If the input violates the subordinator
    condition so badly that the dropped tail has infinite mean (possible
    for malformed impact measures), the finite-rate truncation is still
    returned, uncompensated, with the failure recorded in the report.
    """
    if not (eps > 0.0):
        raise CharacteristicError("truncation cutoff must be positive")
    jump, dropped_rate, dd, db = c.jump.truncate(eps)
    if dropped_rate == 0.0:
        report = TruncationReport(eps, 0.0, Drift(0.0, 0.0), (0.0, 0.0))
        return c, report
    if math.isinf(dd) or math.isinf(db):
        report = TruncationReport(eps, dropped_rate, Drift(0.0, 0.0), (dd, db))
        return Characteristic(c.drift, jump, c.balance_tol), report
    drift = Drift(c.drift.gamma_d + dd, c.drift.gamma_b + db)
    report = TruncationReport(eps, dropped_rate, Drift(dd, db), (dd, db))
    return Characteristic(drift, jump, c.balance_tol), report


def test_functional(
    c: Characteristic,
    g: Callable[[float, float], float],
    grad0: tuple[float, float] | None = None,
) -> float:
    """Evaluate gamma . grad(g)(0) + integral of g dPi.

    This is the pairing that defines convergence of characteristics; the
    harness uses it to check truncation stability.  ``g`` must vanish at
    the origin and be differentiable there; the gradient is taken by
    central differences unless supplied.
    """
    if grad0 is None:
        h = 1e-6
        grad0 = (
            (g(h, 0.0) - g(-h, 0.0)) / (2.0 * h),
            (g(0.0, h) - g(0.0, -h)) / (2.0 * h),
        )
    lin = c.drift.gamma_d * grad0[0] + c.drift.gamma_b * grad0[1]
    val, err = c.jump.integrate(g)
    if err > max(1e-7, 1e-6 * abs(val)):
        raise QuadratureError(f"integral of g dPi unreliable: residual estimate {err:.3g}")
    return lin + val


# ---------------------------------------------------------------------------
# event streams


@dataclass(frozen=True)
class EventStream:
    """Time-ordered Poisson events with per-event mark substream keys.

    The j-th mark uniform of event i is a pure function of (seed, i, j).
    Consumption order is part of the reproducibility contract: j = 0 is the
    forward module's parent draw, j = 1..n are lookdown level uniforms.
    """

    times: np.ndarray
    z_d: np.ndarray
    z_b: np.ndarray
    keys: np.ndarray
    horizon: float
    total_rate: float
    seed: int

    def __len__(self) -> int:
        return len(self.times)

    def event(self, i: int) -> Event:
        return Event(float(self.z_d[i]), float(self.z_b[i]))

    def mark_uniform(self, i: int, j: int) -> float:
        return event_uniform(int(self.keys[i]), j)

    def mark_uniforms(self, i: int, count: int, offset: int = 0) -> np.ndarray:
        return event_uniforms(int(self.keys[i]), count, offset)


def sample_event_stream(c: Characteristic, horizon: float, seed: int) -> EventStream:
    """Draw the recorded event environment on [0, horizon].

    Event times form a Poisson process with the jump measure's total rate;
    marks are iid from the normalized jump measure.  Pure function of
    (characteristic, horizon, seed).
    """
    if horizon < 0.0:
        raise CharacteristicError("horizon must be nonnegative")
    rate = c.jump.total_rate()
    if math.isinf(rate):
        raise CharacteristicError(
            "jump measure has infinite total rate; use truncate(c, eps) first"
        )
    rng = make_generator(derive_key(seed, "event-stream"))
    n = int(rng.poisson(rate * horizon)) if rate > 0.0 else 0
    times = np.sort(rng.random(n)) * horizon
    if n > 0:
        zd, zb = c.jump.sample(rng, n)
    else:
        zd, zb = np.empty(0), np.empty(0)
    keys = event_keys(derive_key(seed, "event-marks"), n)
    return EventStream(times, zd, zb, keys, float(horizon), float(rate), int(seed))
