"""The n-level lookdown particle system.

Levels 1..n carry types; at an event with effective impact zbar each level
is marked independently when its mark uniform is at most zbar, and the
lowest marked level is parental: copies of its type are inserted at the
marked levels while unmarked particles shift upward, the top overflow
being discarded.  Ancestor labels travel with the particles, so the label
vector records the time-zero level each particle descends from.

Level uniforms are the mark-substream values j = 1..n of each event (j = 0
is reserved for the forward module's parent draw), drawn in fixed level
order; levels above n never influence levels up to n, so an m-level run is
the exact restriction of any n > m level run on the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .characteristics import Characteristic, EventStream, sample_event_stream
from .forward import TypeMeasure
from .popsize import walk_jumps
from .rng import derive_key, make_generator


def mark_levels(uniforms: np.ndarray, zbar: float) -> np.ndarray:
    """Participating levels (1-based, sorted): u(i) <= zbar."""
    return np.flatnonzero(np.asarray(uniforms) <= zbar) + 1


def theta_sources(levels: np.ndarray, n: int) -> np.ndarray:
    """0-based source index of each post-event position under theta.

    Positions in the participating set J read from min(J); positions below
    min(J) keep their particle; higher non-participating positions read the
    particle shifted up from i - |J intersect [1,i]| + 1.
    """
    j = np.asarray(levels, dtype=np.int64)
    src = np.arange(n, dtype=np.int64)
    if len(j) <= 1:
        return src
    mark = np.zeros(n, dtype=np.int64)
    mark[j - 1] = 1
    csum = np.cumsum(mark)  # csum[i-1] = |J intersect [1,i]|
    pos = np.arange(1, n + 1, dtype=np.int64)
    shifted = np.where(csum > 0, pos - csum + 1, pos)
    src = shifted - 1
    src[j - 1] = j[0] - 1
    return src


def theta(levels: np.ndarray, k):
    """Insertion-and-shift map on a level vector (types, labels, ...)."""
    n = len(k)
    src = theta_sources(levels, n)
    if isinstance(k, np.ndarray):
        return k[src]
    seq = list(k)
    out = [seq[i] for i in src]
    return type(k)(out) if isinstance(k, tuple) else out


@dataclass(frozen=True)
class LookdownState:
    """Level vector at a fixed time: types with their ancestor labels."""

    types: tuple
    ancestor_labels: tuple[int, ...]
    n: float
    t: float


@dataclass(frozen=True)
class LookdownPath:
    """Event log and final state of an n-level lookdown run."""

    n_levels: int
    alphabet: tuple
    init_codes: np.ndarray
    final_codes: np.ndarray
    final_labels: np.ndarray
    times: np.ndarray
    z_d: np.ndarray
    z_b: np.ndarray
    zbar: np.ndarray
    participants: list  # one sorted 1-based level array per event
    n_before: np.ndarray
    n_after: np.ndarray
    n0: float
    horizon: float
    tau: dict
    stopped_at: float  # horizon unless the run stopped early

    @property
    def final_state(self) -> LookdownState:
        n = float(self.n_after[-1]) if len(self.times) else self.n0
        return LookdownState(
            types=tuple(self.alphabet[i] for i in self.final_codes),
            ancestor_labels=tuple(int(x) for x in self.final_labels),
            n=n,
            t=self.stopped_at,
        )

    def type_frequency(self, type_) -> float:
        """Empirical (de Finetti) frequency of a type over the levels."""
        code = self.alphabet.index(type_)
        return float((self.final_codes == code).mean())


def _initial_codes(initial, n_levels: int, master_seed: int):
    if isinstance(initial, TypeMeasure):
        alphabet = tuple(initial.types)
        rng = make_generator(derive_key(master_seed, "lookdown-init"))
        w = initial.weights()
        cum = np.cumsum(w)
        # one level at a time, in level order, so that runs with different
        # n share the law of their common prefix
        u = rng.random(n_levels)
        codes = np.searchsorted(cum, u, side="right").astype(np.int64)
        codes[codes >= len(alphabet)] = len(alphabet) - 1
        return alphabet, codes
    seq = list(initial)
    if len(seq) != n_levels:
        raise ValueError(f"initial types must have length {n_levels}")
    alphabet = tuple(dict.fromkeys(seq))
    index = {t: i for i, t in enumerate(alphabet)}
    return alphabet, np.array([index[t] for t in seq], dtype=np.int64)


def simulate_lookdown(
    c: Characteristic,
    n0: float,
    n_levels: int,
    initial,
    horizon: float,
    seed: int | None = None,
    stream: EventStream | None = None,
    track_tau: tuple[int, ...] = (),
    stop_after_taus: bool = False,
) -> LookdownPath:
    """Run the n-level lookdown over a (possibly shared) event stream.

    ``initial`` is either an explicit length-n sequence of type labels or a
    TypeMeasure sampled iid per level.  ``track_tau`` lists level counts n
    whose quasi-fixation times (all of levels 1..n descending from level 1)
    are recorded; with ``stop_after_taus`` the run ends once all are found.
    """
    if n_levels < 1:
        raise ValueError("need at least one level")
    if stream is None:
        if seed is None:
            raise ValueError("need a seed or an event stream")
        stream = sample_event_stream(c, horizon, seed)
    alphabet, codes = _initial_codes(initial, n_levels, stream.seed)
    init_codes = codes.copy()
    labels = np.arange(1, n_levels + 1, dtype=np.int64)
    n_before, n_after = walk_jumps(stream, c.drift, n0)

    n_events = len(stream)
    zbar = np.empty(n_events)
    participants: list[np.ndarray] = []
    tau = {m: (0.0 if m <= 1 else math.inf) for m in track_tau}
    pending = {m for m in track_tau if m > 1}
    stopped_at = float(horizon)
    for i in range(n_events):
        zbi = float(stream.z_b[i]) / float(n_after[i])
        zbar[i] = zbi
        u = stream.mark_uniforms(i, n_levels, offset=1)
        j = mark_levels(u, zbi)
        participants.append(j)
        if len(j) >= 2:
            src = theta_sources(j, n_levels)
            codes = codes[src]
            labels = labels[src]
            labels[j - 1] = labels[j[0] - 1]
            if pending:
                t = float(stream.times[i])
                for m in sorted(pending):
                    if (labels[:m] == labels[0]).all():
                        tau[m] = t
                        pending.discard(m)
                if stop_after_taus and not pending:
                    zbar = zbar[: i + 1]
                    n_before = n_before[: i + 1]
                    n_after = n_after[: i + 1]
                    stopped_at = t
                    return LookdownPath(
                        n_levels=n_levels,
                        alphabet=alphabet,
                        init_codes=init_codes,
                        final_codes=codes,
                        final_labels=labels,
                        times=stream.times[: i + 1],
                        z_d=stream.z_d[: i + 1],
                        z_b=stream.z_b[: i + 1],
                        zbar=zbar,
                        participants=participants,
                        n_before=n_before,
                        n_after=n_after,
                        n0=float(n0),
                        horizon=float(horizon),
                        tau=tau,
                        stopped_at=stopped_at,
                    )

    return LookdownPath(
        n_levels=n_levels,
        alphabet=alphabet,
        init_codes=init_codes,
        final_codes=codes,
        final_labels=labels,
        times=stream.times,
        z_d=stream.z_d,
        z_b=stream.z_b,
        zbar=zbar,
        participants=participants,
        n_before=n_before,
        n_after=n_after,
        n0=float(n0),
        horizon=float(horizon),
        tau=tau,
        stopped_at=stopped_at,
    )


def quasi_fixation_time(path: LookdownPath, n: int) -> float:
    """First time levels 1..n all descend from level 1 (inf if not yet).

    Level 1 is never displaced, so this is the first time the ancestor
    labels of levels 1..n all equal 1.  Recomputed from the event log when
    not tracked during the run.
    """
    if n > path.n_levels:
        raise ValueError(f"n = {n} exceeds simulated level count {path.n_levels}")
    if n in path.tau:
        return path.tau[n]
    if n <= 1:
        return 0.0
    labels = np.arange(1, path.n_levels + 1, dtype=np.int64)
    for i, j in enumerate(path.participants):
        if len(j) < 2:
            continue
        src = theta_sources(j, path.n_levels)
        labels = labels[src]
        labels[j - 1] = labels[j[0] - 1]
        if (labels[:n] == 1).all():
            return float(path.times[i])
    return math.inf


def event_log_csv(path: LookdownPath) -> str:
    """Event log: t, z_d, z_b, zbar, participating levels (semicolon-joined)."""
    rows = ["t,z_d,z_b,zbar,J"]
    for i in range(len(path.times)):
        j = ";".join(str(int(x)) for x in path.participants[i])
        rows.append(
            f"{float(path.times[i])!r},{float(path.z_d[i])!r},"
            f"{float(path.z_b[i])!r},{float(path.zbar[i])!r},{j}"
        )
    return "\n".join(rows) + "\n"
