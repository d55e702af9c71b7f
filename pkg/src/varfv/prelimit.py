"""Individual-based model at carrying-capacity scale m.

Individuals are discrete: each carries an independent death clock with the
drift death rate, a global clock at m times the birth drift adds a copy of
a uniformly chosen individual, and jump events kill floor(n z_d)
individuals (uniformly, without replacement) and add floor(m z_b) copies
of a uniformly chosen pre-event individual.  Rescaled by m, the size
process approaches the continuum population-size process as m grows.

The competing exponential clocks are exact: all rates are constant between
transitions.  Events too small to move either counter leave the state
unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .characteristics import Characteristic, CharacteristicError
from .rng import derive_key, make_generator


@dataclass(frozen=True)
class IBPath:
    """Grid-sampled trajectory of the individual-based run."""

    m: int
    types: tuple
    grid_t: np.ndarray
    counts_grid: np.ndarray  # integer counts, one row per grid time
    births: int
    deaths: int
    n_initial: int
    extinct: bool
    extinction_time: float  # inf when the run survived

    def n_over_m(self) -> np.ndarray:
        return self.counts_grid.sum(axis=1) / self.m

    def frequencies(self) -> np.ndarray:
        totals = self.counts_grid.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = self.counts_grid / totals
        return np.where(totals > 0, w, 0.0)


def simulate_ib(
    c: Characteristic,
    m: int,
    n0: float,
    initial_weights,
    horizon: float,
    seed: int,
    grid=64,
    types: tuple | None = None,
) -> IBPath:
    """Simulate the discrete model started from floor(m * n0) individuals.

    ``initial_weights`` gives the type law of the initial individuals
    (sampled multinomially).  The run halts if the population dies out;
    remaining grid rows are zero and the path is flagged.
    """
    if m < 1:
        raise ValueError("carrying-capacity scale m must be >= 1")
    rate_events = c.jump.total_rate()
    if math.isinf(rate_events):
        raise CharacteristicError("individual-based model needs a finite-activity characteristic")
    weights = np.asarray(initial_weights, dtype=float)
    weights = weights / weights.sum()
    n_types = len(weights)
    if types is None:
        types = tuple(range(n_types))
    rng = make_generator(derive_key(seed, "prelimit"))
    n_init = int(math.floor(m * n0))
    counts = rng.multinomial(n_init, weights).astype(np.int64)

    grid_t = np.linspace(0.0, horizon, grid + 1) if isinstance(grid, int) else np.asarray(grid, float)
    counts_grid = np.zeros((len(grid_t), n_types), dtype=np.int64)
    g = 0
    births = 0
    deaths = 0
    extinct = False
    extinction_time = math.inf
    gd = c.drift.gamma_d
    gb_m = m * c.drift.gamma_b
    t = 0.0
    while True:
        n = int(counts.sum())
        if n == 0:
            extinct = True
            extinction_time = t
            break
        total_rate = n * gd + gb_m + rate_events
        if total_rate == 0.0:
            break
        t_next = t + rng.exponential(1.0 / total_rate)
        if t_next > horizon:
            break
        while g < len(grid_t) and grid_t[g] < t_next:
            counts_grid[g] = counts
            g += 1
        t = t_next
        u = rng.random() * total_rate
        if u < n * gd:
            victim = _pick_typed(counts, n, rng)
            counts[victim] -= 1
            deaths += 1
        elif u < n * gd + gb_m:
            parent = _pick_typed(counts, n, rng)
            counts[parent] += 1
            births += 1
        else:
            zd, zb = c.jump.sample(rng, 1)
            d = int(math.floor(n * float(zd[0])))
            b = int(math.floor(m * float(zb[0])))
            if d == 0 and b == 0:
                continue  # too small to move either counter
            parent = _pick_typed(counts, n, rng)  # from the pre-event population
            if d > 0:
                counts -= rng.multivariate_hypergeometric(counts, d).astype(np.int64)
                deaths += d
            if b > 0:
                counts[parent] += b
                births += b
    while g < len(grid_t):
        counts_grid[g] = counts if not extinct else 0
        g += 1
    return IBPath(
        m=m,
        types=types,
        grid_t=grid_t,
        counts_grid=counts_grid,
        births=births,
        deaths=deaths,
        n_initial=n_init,
        extinct=extinct,
        extinction_time=extinction_time,
    )


def _pick_typed(counts: np.ndarray, n: int, rng: np.random.Generator) -> int:
    cum = np.cumsum(counts)
    return int(np.searchsorted(cum, rng.random() * n, side="right"))


def simulate_ib_size_finals(
    c: Characteristic, m: int, n0: float, horizon: float, replicates: int, seed: int
) -> np.ndarray:
    """Final rescaled sizes N^m_T / m over replicates (type-free fast path).

    The size process does not depend on types, so this skips all type
    bookkeeping; extinct runs report zero.
    """
    rate_events = c.jump.total_rate()
    if math.isinf(rate_events):
        raise CharacteristicError("individual-based model needs a finite-activity characteristic")
    gd = c.drift.gamma_d
    gb_m = m * c.drift.gamma_b
    out = np.empty(replicates)
    for r in range(replicates):
        rng = make_generator(derive_key(seed, "prelimit-size", r))
        n = int(math.floor(m * n0))
        t = 0.0
        while n > 0:
            total_rate = n * gd + gb_m + rate_events
            if total_rate == 0.0:
                break
            t += rng.exponential(1.0 / total_rate)
            if t > horizon:
                break
            u = rng.random() * total_rate
            if u < n * gd:
                n -= 1
            elif u < n * gd + gb_m:
                n += 1
            else:
                zd, zb = c.jump.sample(rng, 1)
                n += int(math.floor(m * float(zb[0]))) - int(math.floor(n * float(zd[0])))
        out[r] = n / m
    return out


def path_to_csv(path: IBPath) -> str:
    """Same trajectory schema as the forward module, with integer counts."""
    header = f"# m={path.m}\nt,N," + ",".join(f"count_{t}" for t in path.types)
    rows = [header]
    for k in range(len(path.grid_t)):
        counts = ",".join(str(int(v)) for v in path.counts_grid[k])
        rows.append(f"{float(path.grid_t[k])!r},{int(path.counts_grid[k].sum())},{counts}")
    return "\n".join(rows) + "\n"
