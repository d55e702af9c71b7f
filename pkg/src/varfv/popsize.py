"""Exact event-driven simulation of the population-size process.

Between events the population follows the closed-form drift flow
N' = gamma_b - gamma_d * N; at an event (z_d, z_b) it jumps to
(1 - z_d) * N + z_b.  There is no time discretization anywhere: grid
samples are evaluated through the exact flow and never feed back into the
dynamics, so paths are reproducible bit for bit from (config, seed).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .characteristics import (
    Characteristic,
    CharacteristicError,
    Drift,
    Event,
    EventStream,
    sample_event_stream,
)
from .rng import derive_key


def flow(n: float, drift: Drift, dt: float) -> float:
    """Drift flow after time dt: exponential approach to gamma_b/gamma_d.

    Written with expm1 so vanishing death rates stay finite.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    if drift.gamma_d > 0.0:
        decay = math.exp(-drift.gamma_d * dt)
        return n * decay + drift.gamma_b * (-math.expm1(-drift.gamma_d * dt)) / drift.gamma_d
    return n + drift.gamma_b * dt


def flow_integral(n: float, drift: Drift, dt: float) -> float:
    """Integral of the flow over [0, dt] (for exact time averages)."""
    x = drift.gamma_d * dt
    if x > 1e-10:
        e = -math.expm1(-x) / drift.gamma_d
        return n * e + drift.gamma_b * (dt - e) / drift.gamma_d
    return n * dt + 0.5 * drift.gamma_b * dt * dt


def apply_event(n: float, z: Event) -> float:
    """Post-event population size (1 - z_d) * n + z_b."""
    if not (n > 0.0):
        raise CharacteristicError(f"population size must be positive, got {n}")
    return (1.0 - z.z_d) * n + z.z_b


@dataclass(frozen=True)
class PopPath:
    """A simulated population-size trajectory with its jump records."""

    n0: float
    drift: Drift
    horizon: float
    jump_times: np.ndarray
    n_before: np.ndarray
    n_after: np.ndarray
    z_d: np.ndarray
    z_b: np.ndarray
    grid_t: np.ndarray
    grid_n: np.ndarray

    @property
    def min_n(self) -> float:
        """Minimum over the whole path (flow is monotone between jumps)."""
        candidates = [self.n0, self.final_n]
        if len(self.jump_times):
            candidates += [float(self.n_before.min()), float(self.n_after.min())]
        if len(self.grid_t):
            candidates.append(float(self.grid_n.min()))
        return min(candidates)

    @property
    def final_n(self) -> float:
        if len(self.jump_times):
            dt = self.horizon - float(self.jump_times[-1])
            return flow(float(self.n_after[-1]), self.drift, dt)
        return flow(self.n0, self.drift, self.horizon)


def walk_jumps(stream: EventStream, drift: Drift, n0: float):
    """Pre/post population sizes at every event of the stream.

    All modules that share an event stream (population size, forward type
    process, lookdown, environment recorder) use this single walk so their
    N tracks agree bit for bit.
    """
    n_events = len(stream)
    n_before = np.empty(n_events)
    n_after = np.empty(n_events)
    n = n0
    t_prev = 0.0
    for i in range(n_events):
        t = float(stream.times[i])
        n = flow(n, drift, t - t_prev)
        n_before[i] = n
        n = (1.0 - float(stream.z_d[i])) * n + float(stream.z_b[i])
        n_after[i] = n
        t_prev = t
    return n_before, n_after


def _resolve_grid(grid, horizon: float) -> np.ndarray:
    if grid is None:
        return np.empty(0)
    if isinstance(grid, int):
        return np.linspace(0.0, horizon, grid + 1)
    g = np.asarray(grid, dtype=float)
    if len(g) and (g[0] < 0.0 or g[-1] > horizon or np.any(np.diff(g) < 0.0)):
        raise ValueError("grid must be sorted within [0, horizon]")
    return g


def fill_grid(
    grid_t: np.ndarray, stream_times: np.ndarray, n_after: np.ndarray, drift: Drift, n0: float
) -> np.ndarray:
    """Evaluate the exact flow at grid times given the jump skeleton."""
    out = np.empty(len(grid_t))
    idx = np.searchsorted(stream_times, grid_t, side="right")
    for j, t in enumerate(grid_t):
        i = idx[j]
        if i == 0:
            out[j] = flow(n0, drift, float(t))
        else:
            out[j] = flow(float(n_after[i - 1]), drift, float(t) - float(stream_times[i - 1]))
    return out


def simulate_pop(
    c: Characteristic,
    n0: float,
    horizon: float,
    seed: int | None = None,
    grid=None,
    stream: EventStream | None = None,
) -> PopPath:
    """Simulate the population-size process exactly on [0, horizon].

    Either a seed or a presampled event stream must be given; passing the
    same stream to the forward/lookdown simulators couples them to this
    path exactly.
    """
    if not (n0 > 0.0):
        raise CharacteristicError("initial population size must be positive")
    if stream is None:
        if seed is None:
            raise ValueError("need a seed or an event stream")
        stream = sample_event_stream(c, horizon, seed)
    n_before, n_after = walk_jumps(stream, c.drift, n0)
    grid_t = _resolve_grid(grid, horizon)
    grid_n = fill_grid(grid_t, stream.times, n_after, c.drift, n0)
    return PopPath(
        n0=float(n0),
        drift=c.drift,
        horizon=float(horizon),
        jump_times=stream.times,
        n_before=n_before,
        n_after=n_after,
        z_d=stream.z_d,
        z_b=stream.z_b,
        grid_t=grid_t,
        grid_n=grid_n,
    )


def sandwich_check(path: PopPath, rtol: float = 1e-9) -> tuple[bool, float]:
    """Verify the pathwise decay/growth envelope around the trajectory.

    Lower bound: exponential drift decay times the product of survived
    proportions, restarted after full-replacement events.  Upper bound:
    n0 + gamma_b * t plus the accumulated birth masses.  Returns the pass
    flag and the largest relative violation seen.
    """
    gd = path.drift.gamma_d
    gb = path.drift.gamma_b
    worst = 0.0

    def excess(n, low, up):
        scale_lo = max(abs(low), 1e-300)
        scale_up = max(abs(up), 1e-300)
        return max((low - n) / scale_lo, (n - up) / scale_up, 0.0)

    # grid values at an exact jump time are post-event, so they sort last
    checks = [(float(t), float(n), None) for t, n in zip(path.grid_t, path.grid_n)]
    for i in range(len(path.jump_times)):
        t = float(path.jump_times[i])
        checks.append((t, float(path.n_before[i]), ("pre", i)))
        checks.append((t, float(path.n_after[i]), ("post", i)))
    order = {"pre": 0, "post": 1}
    checks.sort(key=lambda c: (c[0], 2 if c[2] is None else order[c[2][0]]))

    low = path.n0
    up = path.n0
    t_prev = 0.0
    for t, n, tag in checks:
        dt = t - t_prev
        low *= math.exp(-gd * dt)
        up += gb * dt
        t_prev = t
        if tag is None or tag[0] == "pre":
            worst = max(worst, excess(n, low, up))
        if tag is not None and tag[0] == "post":
            i = tag[1]
            zd = float(path.z_d[i])
            zb = float(path.z_b[i])
            up += zb
            if zd == 1.0:
                low = float(path.n_after[i])  # restart after full replacement
            else:
                low *= 1.0 - zd
            worst = max(worst, excess(n, low, up))
    return worst <= rtol, worst


@dataclass(frozen=True)
class StationaryStats:
    """Long-run diagnostics of a single population-size path."""

    time_avg_mean: float
    hist_edges: np.ndarray
    hist_occupation: np.ndarray  # time fractions per bin
    marginal_samples: np.ndarray
    min_n: float
    hypothesis_ok: bool


def _occupation(n_start: float, drift: Drift, dur: float, edges: np.ndarray, out: np.ndarray):
    """Add the exact sojourn times of one flow segment to ``out``."""
    if dur <= 0.0:
        return
    n_end = flow(n_start, drift, dur)
    lo, hi = min(n_start, n_end), max(n_start, n_end)
    if lo == hi:
        j = min(np.searchsorted(edges, lo, side="right") - 1, len(out) - 1)
        out[max(j, 0)] += dur
        return

    def hit_time(x: float) -> float:
        # first time the flow reaches level x (x within [lo, hi])
        if drift.gamma_d > 0.0:
            k = drift.gamma_b / drift.gamma_d
            return math.log((n_start - k) / (x - k)) / drift.gamma_d
        return (x - n_start) / drift.gamma_b

    cuts = [0.0]
    for e in edges:
        if lo < e < hi:
            cuts.append(min(max(hit_time(float(e)), 0.0), dur))
    cuts.append(dur)
    cuts.sort()
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mid = flow(n_start, drift, 0.5 * (a + b))
        j = min(max(np.searchsorted(edges, mid, side="right") - 1, 0), len(out) - 1)
        out[j] += b - a


def stationary_stats(
    c: Characteristic,
    n0: float,
    burn_in: float,
    sample_t: float,
    seed: int,
    bins: int = 64,
    marginal_points: int = 256,
) -> StationaryStats:
    """Time-averaged occupation statistics after a burn-in window.

    The ergodicity hypothesis needs gamma_d > 0 and a nonzero jump
    measure; when it fails a warning is emitted and the statistics are
    still computed (they then describe the deterministic flow limit).
    """
    hypothesis_ok = c.drift.gamma_d > 0.0 and c.jump.total_rate() > 0.0
    if not hypothesis_ok:
        warnings.warn(
            "ergodicity hypothesis violated (needs gamma_d > 0 and a nonzero jump measure); "
            "statistics describe the deterministic flow limit",
            stacklevel=2,
        )
    if not (sample_t > 0.0) or burn_in < 0.0:
        raise ValueError("need sample_t > 0 and burn_in >= 0")
    horizon = burn_in + sample_t
    path = simulate_pop(c, n0, horizon, seed=seed)
    times = np.concatenate([[0.0], path.jump_times, [horizon]])
    starts = np.concatenate([[path.n0], path.n_after])

    # restrict to segments overlapping the sampling window
    total = 0.0
    mean_acc = 0.0
    seg_lo: list[tuple[float, float, float]] = []
    for i in range(len(starts)):
        a, b = float(times[i]), float(times[i + 1])
        s = max(a, burn_in)
        e = min(b, horizon)
        if e <= s:
            continue
        n_at_s = flow(float(starts[i]), c.drift, s - a)
        seg_lo.append((n_at_s, e - s, flow(n_at_s, c.drift, e - s)))
        mean_acc += flow_integral(n_at_s, c.drift, e - s)
        total += e - s
    time_avg_mean = mean_acc / total if total > 0.0 else float("nan")

    lo = min(min(n, ne) for n, _, ne in seg_lo)
    hi = max(max(n, ne) for n, _, ne in seg_lo)
    if len(path.jump_times):
        in_window = (path.jump_times >= burn_in) & (path.jump_times <= horizon)
        if in_window.any():
            lo = min(lo, float(path.n_before[in_window].min()), float(path.n_after[in_window].min()))
            hi = max(hi, float(path.n_before[in_window].max()), float(path.n_after[in_window].max()))
    if hi <= lo:
        hi = lo + max(1e-12, abs(lo) * 1e-12)
    edges = np.linspace(lo, hi, bins + 1)
    occ = np.zeros(bins)
    for n_at_s, dur, _ in seg_lo:
        _occupation(n_at_s, c.drift, dur, edges, occ)
    occ /= occ.sum() if occ.sum() > 0 else 1.0

    grid = np.linspace(burn_in, horizon, marginal_points)
    samples = fill_grid(grid, path.jump_times, path.n_after, c.drift, path.n0)
    return StationaryStats(
        time_avg_mean=time_avg_mean,
        hist_edges=edges,
        hist_occupation=occ,
        marginal_samples=samples,
        min_n=lo,
        hypothesis_ok=hypothesis_ok,
    )


def simulate_pop_finals(
    c: Characteristic, n0: float, horizon: float, replicates: int, seed: int
) -> np.ndarray:
    """Final population sizes over independent replicates (fast path)."""
    out = np.empty(replicates)
    for r in range(replicates):
        stream = sample_event_stream(c, horizon, derive_key(seed, "pop-final", r))
        n = n0
        t_prev = 0.0
        for i in range(len(stream)):
            t = float(stream.times[i])
            n = flow(n, c.drift, t - t_prev)
            n = (1.0 - float(stream.z_d[i])) * n + float(stream.z_b[i])
            t_prev = t
        out[r] = flow(n, c.drift, horizon - t_prev)
    return out


def path_to_csv(path: PopPath) -> str:
    """CSV with columns t, N, jump_flag, z_d, z_b (marks empty on grid rows)."""
    rows = ["t,N,jump_flag,z_d,z_b"]
    entries = [(float(t), float(n), None) for t, n in zip(path.grid_t, path.grid_n)]
    for i in range(len(path.jump_times)):
        entries.append(
            (float(path.jump_times[i]), float(path.n_after[i]), (float(path.z_d[i]), float(path.z_b[i])))
        )
    entries.sort(key=lambda e: (e[0], e[2] is not None))
    for t, n, mark in entries:
        if mark is None:
            rows.append(f"{t!r},{n!r},0,,")
        else:
            rows.append(f"{t!r},{n!r},1,{mark[0]!r},{mark[1]!r}")
    return "\n".join(rows) + "\n"
