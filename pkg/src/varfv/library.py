"""Named characteristics used throughout the tests and studies."""

from __future__ import annotations

import math

from .characteristics import (
    Characteristic,
    DiagonalLambda,
    Drift,
    Event,
    PointMassList,
    ProductMeasure,
)
from .shapes import PointShape, PowerShape, UniformShape


def uniform_birth_characteristic(k: float, rate: float = 1.0) -> Characteristic:
    """Pure-birth events Unif[0, k] at the given rate, balanced by drift.

    gamma_d = 1 and gamma_b = 1 - rate*k/2, so the carrying capacity is 1.
    Shrinking k makes the events small and frequent relative to their
    impact, which is the regime that flattens into diffusive paths.
    """
    gamma_b = 1.0 - rate * k / 2.0
    if gamma_b < 0.0:
        raise ValueError(f"rate*k = {rate * k} too large for a nonnegative birth drift")
    jump = ProductMeasure(rate, PointShape(0.0), UniformShape(0.0, k))
    return Characteristic(Drift(1.0, gamma_b), jump)


def two_sided_log_characteristic() -> Characteristic:
    """Heavy-tailed product events on both coordinates.

    Death proportions follow a 1/x density on [1e-4, 0.3] and birth masses
    an independent 1/x density on [1e-4, 0.4]; the total rate is the mass
    of the unnormalized death density and the birth drift balances the
    characteristic exactly.  Good for banded many-type pictures.
    """
    lo = 1e-4
    rate = 3.0 * math.log(0.3 / lo)
    shape_d = PowerShape(1.0, lo, 0.3)
    shape_b = PowerShape(1.0, lo, 0.4)
    jump = ProductMeasure(rate, shape_d, shape_b)
    gamma_d = 1.0
    gamma_b = gamma_d + jump.moment_zd() - jump.moment_zb()
    return Characteristic(Drift(gamma_d, gamma_b), jump)


def symmetric_point_characteristic(z: float = 0.5, rate: float = 1.0) -> Characteristic:
    """Driftless characteristic with a single symmetric event (z, z)."""
    return Characteristic(Drift(0.0, 0.0), PointMassList(((rate, Event(z, z)),)))


def mixed_product_characteristic() -> Characteristic:
    """Events with both random deaths and random births, capacity one.

    z_d ~ Unif[0, 0.5] and z_b ~ Unif[0, 0.6] at rate 1.5; the drift
    (1, 0.925) balances the first moments.
    """
    jump = ProductMeasure(1.5, UniformShape(0.0, 0.5), UniformShape(0.0, 0.6))
    gamma_d = 1.0
    gamma_b = gamma_d + jump.moment_zd() - jump.moment_zb()
    return Characteristic(Drift(gamma_d, gamma_b), jump)


def linear_lambda_diagonal(
    mass: float = 1.0, drift_rate: float = 1.0, impact_bound: float = 1.0
) -> Characteristic:
    """Infinite-activity diagonal family with finite first moments.

    The impact measure is Lambda(du) = mass * (2u/b^2) du on [0, b], so the
    jump measure has density 2*mass/(b^2 u) on the diagonal: the total rate
    diverges at zero while the subordinator condition holds.  Diagonal
    events are symmetric, so any equal drift pair keeps the balance;
    ``drift_rate`` sets gamma_d = gamma_b.
    """
    shape = PowerShape(-1.0, 0.0, impact_bound)  # density 2u/b^2 on [0, b]
    jump = DiagonalLambda(shape, lambda_mass=mass)
    return Characteristic(Drift(drift_rate, drift_rate), jump)


def dense_small_births(rate: float = 5.0, cap: float = 0.2) -> Characteristic:
    """Frequent small birth events, capacity one.

    Event births Unif[0, cap] at the given rate with no event deaths;
    gamma_d = 1 and the birth drift balances.  The many small jumps make
    finite-population floor effects easy to resolve, which is what the
    individual-based convergence check needs.
    """
    jump = ProductMeasure(rate, PointShape(0.0), UniformShape(0.0, cap))
    gamma_b = 1.0 - jump.moment_zb()
    if gamma_b < 0.0:
        raise ValueError("rate*cap/2 must stay below 1 for a nonnegative birth drift")
    return Characteristic(Drift(1.0, gamma_b), jump)


def named_characteristic(name: str) -> Characteristic:
    """Resolve a characteristic by registry name (used by configs)."""
    registry = {
        "uniform-birth-k1": lambda: uniform_birth_characteristic(1.0),
        "uniform-birth-k1_3": lambda: uniform_birth_characteristic(1.0 / 3.0),
        "uniform-birth-k1_10": lambda: uniform_birth_characteristic(1.0 / 10.0),
        "uniform-birth-k1_20": lambda: uniform_birth_characteristic(1.0 / 20.0),
        "two-sided-log": two_sided_log_characteristic,
        "symmetric-half": symmetric_point_characteristic,
        "mixed-product": mixed_product_characteristic,
        "linear-lambda-diagonal": linear_lambda_diagonal,
        "dense-small-births": dense_small_births,
    }
    try:
        return registry[name]()
    except KeyError:
        known = ", ".join(sorted(registry))
        raise ValueError(f"unknown characteristic name {name!r}; known: {known}") from None
