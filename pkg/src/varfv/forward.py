"""Forward simulation of the measure-valued (N, type distribution) process.

The drift only moves total mass; type proportions change exclusively at
events, where the effective impact zbar = z_b / ((1-z_d) N + z_b) of the
event replaces a zbar-fraction of the distribution by the parental type.
On a shared event stream the N track of a forward path agrees bit for bit
with the plain population-size simulation, and the parent choice consumes
exactly the first uniform (j = 0) of each event's mark substream, leaving
j >= 1 for the lookdown levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .characteristics import (
    Characteristic,
    CharacteristicError,
    Event,
    EventStream,
    sample_event_stream,
)
from .popsize import fill_grid, flow, walk_jumps
from .rng import derive_key, event_uniforms_at

PRUNE_TOL = 1e-15  # numerical atom-removal policy, not model content


@dataclass(frozen=True)
class TypeMeasure:
    """Atom-supported measure on the type space; total mass is the
    population size.  Atoms at or below PRUNE_TOL are removed on
    construction."""

    types: tuple
    masses: tuple[float, ...]

    def __post_init__(self):
        if len(self.types) != len(self.masses):
            raise ValueError("types and masses must align")
        keep = [(t, float(m)) for t, m in zip(self.types, self.masses) if m > PRUNE_TOL]
        if any(m < 0.0 for m in self.masses):
            raise ValueError("masses must be nonnegative")
        if not keep:
            raise ValueError("measure needs at least one atom above the prune tolerance")
        object.__setattr__(self, "types", tuple(t for t, _ in keep))
        object.__setattr__(self, "masses", tuple(m for _, m in keep))

    @property
    def total(self) -> float:
        return float(sum(self.masses))

    def weights(self) -> np.ndarray:
        m = np.asarray(self.masses)
        return m / m.sum()

    def mass_of(self, type_) -> float:
        for t, m in zip(self.types, self.masses):
            if t == type_:
                return m
        return 0.0


def equal_atoms(n_types: int, total: float = 1.0) -> TypeMeasure:
    """n_types atoms of equal mass, labelled 0..n_types-1."""
    return TypeMeasure(tuple(range(n_types)), tuple([total / n_types] * n_types))


def two_types(w0: float, n0: float = 1.0, labels=("a", "A")) -> TypeMeasure:
    return TypeMeasure(labels, (w0 * n0, (1.0 - w0) * n0))


def pick_atom(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF atom choice; zero-weight atoms are never selected."""
    cum = np.cumsum(weights)
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    if idx >= len(weights):
        idx = len(weights) - 1
    while weights[idx] == 0.0 and idx > 0:
        idx -= 1
    return idx


def forward_step(m: TypeMeasure, z: Event, parent_draw: float) -> TypeMeasure:
    """Apply one event: scale all atoms by (1 - z_d), give z_b to the parent.

    The parent atom is chosen by inverse CDF over atom masses using the
    supplied uniform.
    """
    if not (m.total > 0.0):
        raise CharacteristicError("cannot step an empty measure")
    masses = np.asarray(m.masses)
    idx = pick_atom(masses, parent_draw)
    out = (1.0 - z.z_d) * masses
    out[idx] += z.z_b
    return TypeMeasure(m.types, tuple(out))


@dataclass(frozen=True)
class ForwardPath:
    """Grid snapshots and jump records of a forward simulation.

    ``grid_masses[k, j]`` is the mass of atom j at grid time k (zero once
    the atom has died out); the N column equals the population-size path
    on the same stream exactly.
    """

    types: tuple
    n0: float
    horizon: float
    grid_t: np.ndarray
    grid_n: np.ndarray
    grid_masses: np.ndarray
    jump_times: np.ndarray
    z_d: np.ndarray
    z_b: np.ndarray
    zbar: np.ndarray
    parent_idx: np.ndarray
    track_idx: int | None
    w_grid: np.ndarray

    def surviving_atoms(self) -> np.ndarray:
        return (self.grid_masses > 0.0).sum(axis=1)

    def final_measure(self) -> TypeMeasure:
        masses = self.grid_masses[-1]
        keep = masses > PRUNE_TOL
        return TypeMeasure(
            tuple(t for t, k in zip(self.types, keep) if k), tuple(masses[keep])
        )


def simulate_forward(
    c: Characteristic,
    initial: TypeMeasure,
    horizon: float,
    seed: int | None = None,
    grid=64,
    stream: EventStream | None = None,
    track=None,
) -> ForwardPath:
    """Simulate (N, type distribution) on a shared event stream.

    ``track`` names the atom whose frequency series is recorded (defaults
    to the first atom).
    """
    if stream is None:
        if seed is None:
            raise ValueError("need a seed or an event stream")
        stream = sample_event_stream(c, horizon, seed)
    n0 = initial.total
    n_before, n_after = walk_jumps(stream, c.drift, n0)
    if isinstance(grid, int):
        grid_t = np.linspace(0.0, horizon, grid + 1)
    else:
        grid_t = np.asarray(grid, dtype=float)
    grid_n = fill_grid(grid_t, stream.times, n_after, c.drift, n0)

    types = initial.types
    rho = np.asarray(initial.masses) / n0
    track_idx = 0 if track is None else types.index(track)
    n_events = len(stream)
    zbar = np.empty(n_events)
    parent_idx = np.empty(n_events, dtype=np.int64)
    grid_rho = np.empty((len(grid_t), len(types)))
    g = 0
    for i in range(n_events):
        t = float(stream.times[i])
        while g < len(grid_t) and grid_t[g] < t:
            grid_rho[g] = rho
            g += 1
        zb = float(stream.z_b[i])
        zbi = zb / float(n_after[i])  # equals the effective impact at N(t-)
        u = stream.mark_uniform(i, 0)
        idx = pick_atom(rho, u)
        rho = (1.0 - zbi) * rho
        rho[idx] += zbi
        dead = (rho > 0.0) & (float(n_after[i]) * rho <= PRUNE_TOL)
        if dead.any():
            rho[dead] = 0.0
        zbar[i] = zbi
        parent_idx[i] = idx
    while g < len(grid_t):
        grid_rho[g] = rho
        g += 1

    grid_masses = grid_rho * grid_n[:, None]
    return ForwardPath(
        types=types,
        n0=float(n0),
        horizon=float(horizon),
        grid_t=grid_t,
        grid_n=grid_n,
        grid_masses=grid_masses,
        jump_times=stream.times,
        z_d=stream.z_d,
        z_b=stream.z_b,
        zbar=zbar,
        parent_idx=parent_idx,
        track_idx=track_idx,
        w_grid=grid_rho[:, track_idx].copy(),
    )


def heterozygosity(path: ForwardPath) -> np.ndarray:
    """w(1-w) of the tracked type at each grid time."""
    if path.track_idx is None:
        raise ValueError("no tracked type on this path")
    w = path.w_grid
    return w * (1.0 - w)


def path_to_csv(path: ForwardPath) -> str:
    """Trajectory CSV: t, N, then one mass column per atom."""
    header = "t,N," + ",".join(f"mass_{t}" for t in path.types)
    rows = [header]
    for k in range(len(path.grid_t)):
        masses = ",".join(repr(float(v)) for v in path.grid_masses[k])
        rows.append(f"{float(path.grid_t[k])!r},{float(path.grid_n[k])!r},{masses}")
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# fast two-type scans used by the statistical studies


def _two_type_scan(stream: EventStream, drift, n0: float, w0: float, grid_t, fix_eps):
    """Shared inner loop: returns (w_grid or None, w_final, stop_time, side).

    ``side`` is +1/-1 once w crosses 1-fix_eps / fix_eps, else 0.  The
    parent decision uses mark uniform j=0 of each event, identical to the
    general simulator.
    """
    gd = drift.gamma_d
    gb = drift.gamma_b
    times = stream.times
    zds = stream.z_d
    zbs = stream.z_b
    parents = event_uniforms_at(stream.keys, 0) if len(stream) else np.empty(0)
    w_grid = np.empty(len(grid_t)) if grid_t is not None else None
    g = 0
    n = n0
    w = w0
    t_prev = 0.0
    side = 0
    for i in range(len(times)):
        t = float(times[i])
        if w_grid is not None:
            while g < len(grid_t) and grid_t[g] < t:
                w_grid[g] = w
                g += 1
        if gd > 0.0:
            decay = math.exp(-gd * (t - t_prev))
            n = n * decay + gb * (-math.expm1(-gd * (t - t_prev))) / gd
        else:
            n = n + gb * (t - t_prev)
        zb = float(zbs[i])
        n = (1.0 - float(zds[i])) * n + zb
        zbar = zb / n
        if parents[i] < w:
            w = (1.0 - zbar) * w + zbar
        else:
            w = (1.0 - zbar) * w
        t_prev = t
        if fix_eps is not None:
            if w >= 1.0 - fix_eps:
                side = 1
                break
            if w <= fix_eps:
                side = -1
                break
    if w_grid is not None:
        while g < len(grid_t):
            w_grid[g] = w
            g += 1
    return w_grid, w, t_prev, side


def two_type_w_at_grid(
    c: Characteristic,
    w0: float,
    n0: float,
    horizon: float,
    grid_t: np.ndarray,
    replicates: int,
    seed: int,
) -> np.ndarray:
    """Matrix of tracked frequencies, one row per replicate."""
    out = np.empty((replicates, len(grid_t)))
    for r in range(replicates):
        stream = sample_event_stream(c, horizon, derive_key(seed, "fwd2", r))
        out[r], _, _, _ = _two_type_scan(stream, c.drift, n0, w0, grid_t, None)
    return out


def two_type_fixation(
    c: Characteristic,
    w0: float,
    n0: float,
    t_max: float,
    replicates: int,
    seed: int,
    fix_eps: float = 1e-9,
):
    """Run replicates until the frequency leaves [fix_eps, 1-fix_eps].

    Returns (sides, stop_times); side 0 marks a replicate that had not
    fixated by t_max.
    """
    sides = np.zeros(replicates, dtype=np.int64)
    stops = np.full(replicates, float(t_max))
    for r in range(replicates):
        stream = sample_event_stream(c, t_max, derive_key(seed, "fwd2fix", r))
        _, _, t_stop, side = _two_type_scan(stream, c.drift, n0, w0, None, fix_eps)
        sides[r] = side
        if side != 0:
            stops[r] = t_stop
    return sides, stops
