"""Convergence studies: diffusive-limit behaviour and truncation stability."""

from __future__ import annotations

import math
import os

import numpy as np

from ..characteristics import Characteristic, truncate
from ..forward import equal_atoms, simulate_forward, two_type_w_at_grid
from ..library import linear_lambda_diagonal, uniform_birth_characteristic
from ..popsize import simulate_pop_finals
from ..rng import derive_key
from ..stats import fit_decay_rate, ks_distance
from .muller import muller_plot
from ..forward import path_to_csv


def pair_coalescence_rate(c: Characteristic, n: float = 1.0) -> float:
    """Rate of pairwise lineage coalescence at population size n.

    Integrates the squared effective impact over the jump measure; for the
    small-impact families this is the decay rate of mean heterozygosity.
    """
    val, _ = c.jump.integrate(lambda zd, zb: (zb / ((1.0 - zd) * n + zb)) ** 2)
    return val


def heterozygosity_decay(
    c: Characteristic,
    replicates: int,
    seed: int,
    points: int = 25,
    windows: float = 3.0,
) -> dict:
    """Fit the decay rate of mean heterozygosity against the pair rate."""
    lam = pair_coalescence_rate(c)
    horizon = windows / lam
    grid = np.linspace(0.0, horizon, points)
    w = two_type_w_at_grid(c, 0.5, 1.0, horizon, grid, replicates, seed)
    mean_h = (w * (1.0 - w)).mean(axis=0)
    fitted = fit_decay_rate(grid, mean_h)
    return {
        "lambda_hat": lam,
        "lambda_fit": fitted,
        "rel_err": abs(fitted - lam) / lam,
        "horizon": horizon,
        "grid": grid.tolist(),
        "mean_h": mean_h.tolist(),
        "replicates": replicates,
    }


def wf_study(
    out_dir: str,
    seed: int,
    ks=(1.0, 1.0 / 3.0, 1.0 / 10.0, 1.0 / 20.0),
    fit_replicates: int = 1000,
    muller_types: int = 20,
) -> dict:
    """Frequency paths across the small-event family, plus banding plots.

    For each k a 20-type run over about two pair-coalescence windows is
    rendered as a Muller SVG; the smallest k also gets a heterozygosity
    decay fit, which is the quantitative check that the small-event limit
    behaves diffusively.
    """
    os.makedirs(out_dir, exist_ok=True)
    report: dict = {"svg": {}, "csv": {}}
    for idx, k in enumerate(ks):
        c = uniform_birth_characteristic(k)
        lam = pair_coalescence_rate(c)
        horizon = 2.0 / lam
        path = simulate_forward(
            c,
            equal_atoms(muller_types),
            horizon,
            seed=derive_key(seed, "wf-muller", idx),
            grid=200,
        )
        tag = f"k_{idx}"
        csv_path = os.path.join(out_dir, f"wf_{tag}.csv")
        with open(csv_path, "w") as fh:
            fh.write(path_to_csv(path))
        svg_path = os.path.join(out_dir, f"wf_{tag}.svg")
        muller_plot(csv_path, svg_path, title=f"k = {k:g}")
        report["svg"][f"{k:g}"] = svg_path
        report["csv"][f"{k:g}"] = csv_path
        surv = path.surviving_atoms()
        report.setdefault("surviving_atoms", {})[f"{k:g}"] = [
            int(surv[0]),
            int(surv[-1]),
        ]
    smallest = min(ks)
    report["decay_fit"] = heterozygosity_decay(
        uniform_birth_characteristic(smallest),
        replicates=fit_replicates,
        seed=derive_key(seed, "wf-decay"),
    )
    report["decay_fit"]["k"] = smallest
    return report


def closedness_study(
    seed: int,
    eps_sweep=(0.1, 0.05, 0.025),
    base: Characteristic | None = None,
    horizon: float = 3.0,
    replicates: int = 8000,
    n0: float = 2.0,
) -> dict:
    """KS distances between truncation levels eps and eps/2 of one family.

    Each cutoff keeps events with max coordinate above eps and moves the
    removed mean mass into the drift; as the cutoff shrinks, neighbouring
    truncations should become statistically indistinguishable.  The default
    family bounds impacts by 0.11 so the sweep straddles the bulk of the
    measure, and starts away from the diagonal fixed point (the size is
    invariant under symmetric events started at 1).
    """
    if base is None:
        base = linear_lambda_diagonal(mass=0.033, drift_rate=0.2, impact_bound=0.11)
    eps_values = sorted(set(list(eps_sweep) + [e / 2.0 for e in eps_sweep]), reverse=True)
    samples = {}
    for i, eps in enumerate(eps_values):
        trunc, _ = truncate(base, eps)
        samples[eps] = simulate_pop_finals(
            trunc, n0, horizon, replicates, derive_key(seed, "closedness", i)
        )
    rows = []
    for eps in eps_sweep:
        rows.append(
            {
                "eps": eps,
                "ks": ks_distance(samples[eps], samples[eps / 2.0]),
                "rate_at_eps": truncate(base, eps)[0].jump.total_rate(),
            }
        )
    ks_vals = [r["ks"] for r in rows]
    return {
        "rows": rows,
        "strictly_decreasing": all(a > b for a, b in zip(ks_vals, ks_vals[1:])),
        "final_ks": ks_vals[-1],
        "replicates": replicates,
        "horizon": horizon,
    }
