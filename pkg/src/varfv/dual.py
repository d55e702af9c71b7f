"""Backwards-in-time coalescent over a recorded event environment.

Two dual modes are provided.  The coupled trace replays a lookdown path's
recorded marks backwards, inverting the insertion map event by event: it
reproduces the forward genealogy exactly, lineage for lineage.  The
quenched trace keeps only the environment (event times, sizes and the
recorded population sizes) and lets each lineage participate independently
with the recorded effective impact, which is the conditional law of the
coalescent given the environment.  Averaging quenched traces over
environments gives the annealed moment dual of the type-frequency process.

Lineage counts are reported with the left-continuous convention: the value
at an event's backward time is the pre-merge one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .characteristics import Characteristic, EventStream, sample_event_stream
from .forward import two_type_w_at_grid
from .lookdown import LookdownPath
from .popsize import flow, walk_jumps
from .rng import derive_key, make_generator


@dataclass(frozen=True)
class Environment:
    """The projection of a driving noise onto event times and sizes.

    Carries the pre/post population sizes at each event (so the effective
    impacts are reproducible without re-running the flow) and the per-event
    mark substream keys.
    """

    gamma_d: float
    gamma_b: float
    n0: float
    horizon: float
    seed: int
    times: np.ndarray
    z_d: np.ndarray
    z_b: np.ndarray
    n_pre: np.ndarray
    n_post: np.ndarray
    keys: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def zbar(self) -> np.ndarray:
        """Effective impacts z_b / N_post (= z_b / ((1-z_d) N_pre + z_b))."""
        return self.z_b / self.n_post


class EnvironmentFormatError(ValueError):
    """Recorded environment fails its consistency recursion."""


def build_environment(c: Characteristic, n0: float, horizon: float, seed: int) -> Environment:
    """Record the event environment of one population-size run."""
    stream = sample_event_stream(c, horizon, seed)
    n_pre, n_post = walk_jumps(stream, c.drift, n0)
    return Environment(
        gamma_d=c.drift.gamma_d,
        gamma_b=c.drift.gamma_b,
        n0=float(n0),
        horizon=float(horizon),
        seed=int(seed),
        times=stream.times,
        z_d=stream.z_d,
        z_b=stream.z_b,
        n_pre=n_pre,
        n_post=n_post,
        keys=stream.keys,
    )


def environment_to_jsonl(env: Environment) -> str:
    header = {
        "kind": "environment",
        "version": 1,
        "gamma": [env.gamma_d, env.gamma_b],
        "n0": env.n0,
        "horizon": env.horizon,
        "seed": env.seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for i in range(len(env)):
        lines.append(
            json.dumps(
                {
                    "t": float(env.times[i]),
                    "z_d": float(env.z_d[i]),
                    "z_b": float(env.z_b[i]),
                    "n_pre": float(env.n_pre[i]),
                    "n_post": float(env.n_post[i]),
                    "key": int(env.keys[i]),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def environment_from_jsonl(text: str) -> Environment:
    """Parse and verify a recorded environment.

    The flow/jump recursion of the stored population sizes is re-checked
    exactly; in particular z_b/N_post must equal the effective impact at
    N_pre, which guards against corrupted or hand-edited files.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("kind") != "environment":
        raise EnvironmentFormatError("not an environment file")
    gd, gb = (float(x) for x in header["gamma"])
    n0 = float(header["n0"])
    horizon = float(header["horizon"])
    rows = [json.loads(ln) for ln in lines[1:]]
    times = np.array([r["t"] for r in rows], dtype=float)
    z_d = np.array([r["z_d"] for r in rows], dtype=float)
    z_b = np.array([r["z_b"] for r in rows], dtype=float)
    n_pre = np.array([r["n_pre"] for r in rows], dtype=float)
    n_post = np.array([r["n_post"] for r in rows], dtype=float)
    keys = np.array([r["key"] for r in rows], dtype=np.uint64)

    from .characteristics import Drift

    drift = Drift(gd, gb)
    n = n0
    t_prev = 0.0
    for i in range(len(times)):
        expected_pre = flow(n, drift, float(times[i]) - t_prev)
        if expected_pre != n_pre[i]:
            raise EnvironmentFormatError(f"event {i}: N_pre does not reproduce the drift flow")
        expected_post = (1.0 - z_d[i]) * n_pre[i] + z_b[i]
        if expected_post != n_post[i]:
            raise EnvironmentFormatError(
                f"event {i}: N_post != (1-z_d) N_pre + z_b; effective impacts would disagree"
            )
        n = float(n_post[i])
        t_prev = float(times[i])
    return Environment(gd, gb, n0, horizon, int(header.get("seed", 0)), times, z_d, z_b, n_pre, n_post, keys)


@dataclass(frozen=True)
class CoalescentState:
    """Block partition of the sampled lineages at one backward time."""

    blocks: tuple[frozenset, ...]
    backward_time: float

    @property
    def y(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class TraceResult:
    """Lineage-count series (left-continuous) plus the final partition."""

    y0: int
    backward_times: np.ndarray
    y_pre: np.ndarray
    y_post: np.ndarray
    final: CoalescentState

    def y_at(self, s: float) -> int:
        """Left-continuous lineage count at backward time s."""
        idx = int(np.searchsorted(self.backward_times, s, side="left"))
        return self.y0 if idx == 0 else int(self.y_post[idx - 1])


def _inverse_theta_level(level: int, j: np.ndarray) -> int:
    """Pre-event level of the particle sitting at ``level`` after theta."""
    mn = int(j[0])
    if level < mn:
        return level
    pos = int(np.searchsorted(j, level))
    if pos < len(j) and int(j[pos]) == level:
        return mn
    count = int(np.searchsorted(j, level, side="right"))
    return level - count + 1


def trace_coupled(path: LookdownPath, y: int, horizon: float | None = None) -> TraceResult:
    """Trace lineages of levels 1..y backwards through recorded marks.

    Reuses the exact participating sets of the forward lookdown run, so the
    final block count equals the number of distinct ancestor labels among
    levels 1..y, with integer equality.
    """
    if y > path.n_levels:
        raise ValueError(f"y = {y} exceeds simulated level count {path.n_levels}")
    horizon = path.stopped_at if horizon is None else horizon
    blocks: dict[int, set] = {i: {i} for i in range(1, y + 1)}
    s_times: list[float] = []
    y_pre: list[int] = []
    y_post: list[int] = []
    for i in range(len(path.times) - 1, -1, -1):
        t = float(path.times[i])
        if t > horizon:
            continue
        j = path.participants[i]
        if len(j) < 2:
            continue
        before = len(blocks)
        new_blocks: dict[int, set] = {}
        for level, members in blocks.items():
            pre = _inverse_theta_level(level, j)
            new_blocks.setdefault(pre, set()).update(members)
        blocks = new_blocks
        if len(blocks) != before:
            s_times.append(horizon - t)
            y_pre.append(before)
            y_post.append(len(blocks))
    parts = tuple(frozenset(b) for _, b in sorted(blocks.items()))
    final = CoalescentState(parts, horizon)
    return TraceResult(
        y0=y,
        backward_times=np.array(s_times),
        y_pre=np.array(y_pre, dtype=np.int64),
        y_post=np.array(y_post, dtype=np.int64),
        final=final,
    )


def distinct_ancestors(path: LookdownPath, y: int) -> int:
    """Number of distinct ancestor labels among levels 1..y at the end."""
    return len(set(int(x) for x in path.final_labels[:y]))


def trace_quenched(env: Environment, y: int, horizon: float | None = None, seed: int = 0) -> TraceResult:
    """Coalescent in the fixed environment with fresh merge randomness.

    Visiting the recorded events backwards, every current lineage
    participates independently with the recorded effective impact; if at
    least two participate they merge into one block.
    """
    horizon = env.horizon if horizon is None else horizon
    rng = make_generator(derive_key(seed, "quenched-trace"))
    zb = env.zbar()
    blocks: list[set] = [{i} for i in range(1, y + 1)]
    s_times: list[float] = []
    y_pre: list[int] = []
    y_post: list[int] = []
    for i in range(len(env) - 1, -1, -1):
        t = float(env.times[i])
        if t > horizon:
            continue
        u = rng.random(len(blocks))
        hit = np.flatnonzero(u < zb[i])
        if len(hit) >= 2:
            merged = set()
            for idx in hit:
                merged |= blocks[idx]
            keep = [b for k, b in enumerate(blocks) if k not in set(hit.tolist())]
            before = len(blocks)
            blocks = [merged] + keep
            s_times.append(horizon - t)
            y_pre.append(before)
            y_post.append(len(blocks))
    parts = tuple(frozenset(b) for b in sorted(blocks, key=min))
    final = CoalescentState(parts, horizon)
    return TraceResult(
        y0=y,
        backward_times=np.array(s_times),
        y_pre=np.array(y_pre, dtype=np.int64),
        y_post=np.array(y_post, dtype=np.int64),
        final=final,
    )


def _quenched_count(env: Environment, y: int, rng: np.random.Generator) -> int:
    """Lineage count at calendar zero (fast path without partitions)."""
    zb = env.zbar()
    count = y
    for i in range(len(env) - 1, -1, -1):
        k = int((rng.random(count) < zb[i]).sum())
        if k >= 2:
            count -= k - 1
    return count


def dust_probability(env: Environment, t: float) -> float:
    """Quenched probability that the lowest lineage is untouched on [0, t]."""
    zb = env.zbar()
    mask = env.times <= t
    return float(np.prod(1.0 - zb[mask])) if mask.any() else 1.0


def partition_product_expectation(state: CoalescentState, g_list, rho0) -> float:
    """Duality functional for product test functions.

    For f(k_1..k_y) = prod_i g_i(k_i) and a partition of the sample into
    blocks, evaluates the expectation of f with block-constant arguments
    drawn iid from ``rho0``: the product over blocks of
    E[prod_{i in B} g_i(kappa)].  With indicator g's this reduces to
    x^(number of blocks), the moment duality functional.
    """
    weights = rho0.weights()
    total = 1.0
    for block in state.blocks:
        block_val = 0.0
        for t, w in zip(rho0.types, weights):
            prod = 1.0
            for i in sorted(block):
                prod *= g_list[i - 1](t)
            block_val += w * prod
        total *= block_val
    return total


@dataclass(frozen=True)
class DualityStat:
    lhs: float  # forward estimate  E[w_T^y]
    rhs: float  # coalescent estimate E[x^(Y_T)]
    lhs_se: float
    rhs_se: float

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def moment_duality_stat(
    c: Characteristic,
    x: float,
    y: int,
    horizon: float,
    replicates: int,
    seed: int,
    n0: float = 1.0,
) -> DualityStat:
    """Monte-Carlo estimates of both sides of the annealed moment duality.

    Forward side: mean of w_T^y over two-type runs started at frequency x.
    Dual side: mean of x^(Y at calendar 0) over independent environments
    with fresh quenched merges.  Both sides share the characteristic and
    the initial population size.
    """
    w = two_type_w_at_grid(
        c, x, n0, horizon, np.array([horizon]), replicates, derive_key(seed, "duality-forward")
    )[:, 0]
    lhs_samples = w**y
    rhs_samples = np.empty(replicates)
    for r in range(replicates):
        env = build_environment(c, n0, horizon, derive_key(seed, "duality-env", r))
        rng = make_generator(derive_key(seed, "duality-merge", r))
        rhs_samples[r] = x ** _quenched_count(env, y, rng)
    return DualityStat(
        lhs=float(lhs_samples.mean()),
        rhs=float(rhs_samples.mean()),
        lhs_se=float(lhs_samples.std(ddof=1) / math.sqrt(replicates)),
        rhs_se=float(rhs_samples.std(ddof=1) / math.sqrt(replicates)),
    )
