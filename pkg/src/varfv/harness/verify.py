"""The verification suite: one runner per acceptance criterion.

Each criterion is a pure function of (seed, scale): ``scale`` multiplies
the replicate counts (with small floors) so the whole suite can be
exercised quickly; statistical tolerances and pass thresholds never
change.  Stated runtime budgets are only enforced at scale 1.  Reports
carry no timestamps, so identical (seed, scale, criteria) produce
byte-identical report files.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import popsize as ps
from ..characteristics import (
    Characteristic,
    Drift,
    sample_event_stream,
    test_functional,
    validate,
)
from ..dual import (
    build_environment,
    distinct_ancestors,
    moment_duality_stat,
    trace_coupled,
)
from ..forward import two_type_fixation, two_type_w_at_grid, two_types
from ..library import (
    dense_small_births,
    mixed_product_characteristic,
    uniform_birth_characteristic,
)
from ..lookdown import simulate_lookdown, theta
from ..prelimit import simulate_ib_size_finals
from ..rng import derive_key, make_generator
from ..stats import Z_99, binned_tv, ks_distance
from .studies import closedness_study, wf_study

FIG_KS = (1.0, 1.0 / 3.0, 1.0 / 10.0, 1.0 / 20.0)


def _reps(base: int, scale: float, floor: int = 20) -> int:
    return max(floor, int(round(base * scale)))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    runtime_s: float
    stats: dict

    def to_json(self) -> dict:
        # wall time stays out of the report so its bytes are reproducible;
        # budget violations surface through the pass flag and stats
        return {"name": self.name, "passed": bool(self.passed), "stats": self.stats}


def c01_balance_validation(seed: int, scale: float):
    ok = True
    details = {}
    for k in FIG_KS:
        c = uniform_birth_characteristic(k)
        rep = validate(c)
        perturbed = Characteristic(
            Drift(c.drift.gamma_d, c.drift.gamma_b + 1e-6), c.jump, c.balance_tol
        )
        rep_bad = validate(perturbed)
        details[f"k={k:g}"] = {"ok": rep.ok, "perturbed_ok": rep_bad.ok}
        ok = ok and rep.ok and not rep_bad.ok
    return ok, {"cases": details, "runtime_limit_s": 1.0}


def c02_insertion_map(seed: int, scale: float):
    got = theta(np.array([2, 4, 5]), ("k1", "k2", "k3", "k4", "k5", "k6"))
    want = ("k1", "k2", "k3", "k2", "k2", "k4")
    return got == want, {"got": list(got), "want": list(want)}


def _sandwich_paths(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    n_paths = _reps(1000, scale)
    worst = 0.0
    min_n = math.inf
    for r in range(n_paths):
        path = ps.simulate_pop(c, 1.0, 10.0, seed=derive_key(seed, "sandwich", r), grid=32)
        okay, violation = ps.sandwich_check(path, rtol=1e-9)
        worst = max(worst, violation)
        min_n = min(min_n, path.min_n)
        if not okay:
            return False, worst, min_n, n_paths
    return True, worst, min_n, n_paths


def c03_sandwich_bounds(seed: int, scale: float):
    okay, worst, _, n_paths = _sandwich_paths(seed, scale)
    return okay, {"paths": n_paths, "max_violation": worst, "runtime_limit_s": 10.0}


def c04_positivity(seed: int, scale: float):
    _, _, min_n, n_paths = _sandwich_paths(seed, scale)
    return min_n > 0.0, {"paths": n_paths, "min_n": min_n}


def c05_generator_consistency(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    n0 = 1.0
    h = 1e-3
    reps = _reps(100_000, scale, floor=2000)
    rate = c.jump.total_rate()
    rng = make_generator(derive_key(seed, "generator"))
    counts = rng.poisson(rate * h, reps)
    f = lambda n: math.exp(-n)
    base_val = f(ps.flow(n0, c.drift, h))
    samples = np.full(reps, base_val)
    hit = np.flatnonzero(counts > 0)
    for idx in hit:
        k = int(counts[idx])
        times = np.sort(rng.random(k)) * h
        zd, zb = c.jump.sample(rng, k)
        n = n0
        t_prev = 0.0
        for i in range(k):
            n = ps.flow(n, c.drift, float(times[i]) - t_prev)
            n = (1.0 - float(zd[i])) * n + float(zb[i])
            t_prev = float(times[i])
        samples[idx] = f(ps.flow(n, c.drift, h - t_prev))
    estimate = (samples.mean() - f(n0)) / h
    se = samples.std(ddof=1) / math.sqrt(reps) / h
    g = lambda zd, zb: f((1.0 - zd) * n0 + zb) - f(n0)
    target = test_functional(c, g, grad0=(n0 * math.exp(-n0), -math.exp(-n0)))
    # closed form for the uniform-birth family, as an independent cross-check
    k_upper = 1.0
    closed = (c.drift.gamma_b - c.drift.gamma_d * n0) * (-math.exp(-n0)) + rate * math.exp(
        -n0
    ) * ((1.0 - math.exp(-k_upper)) / k_upper - 1.0)
    gap = abs(estimate - target)
    ok = gap < 3.0 * se and abs(target - closed) < 1e-9
    return ok, {
        "replicates": reps,
        "estimate": float(estimate),
        "generator_value": float(target),
        "closed_form": float(closed),
        "gap": float(gap),
        "se": float(se),
        "runtime_limit_s": 60.0,
    }


def c06_frequency_martingale(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0 / 3.0)
    reps = _reps(10_000, scale, floor=200)
    grid = np.linspace(0.0, 5.0, 11)
    w = two_type_w_at_grid(c, 0.5, 1.0, 5.0, grid, reps, derive_key(seed, "martingale"))
    means = w.mean(axis=0)
    ses = w.std(axis=0, ddof=1) / math.sqrt(reps)
    gaps = np.abs(means - 0.5)
    ok = bool(np.all(gaps <= 3.0 * ses))
    worst = int(np.argmax(np.where(ses > 0, gaps / np.where(ses > 0, ses, 1.0), 0.0)))
    return ok, {
        "replicates": reps,
        "grid": grid.tolist(),
        "means": means.tolist(),
        "ses": ses.tolist(),
        "worst_t": float(grid[worst]),
        "runtime_limit_s": 60.0,
    }


def c07_coupled_duality(seed: int, scale: float):
    c = mixed_product_characteristic()
    reps = _reps(500, scale)
    failures = 0
    for r in range(reps):
        stream = sample_event_stream(c, 3.0, derive_key(seed, "coupled", r))
        path = simulate_lookdown(c, 1.0, 64, two_types(0.5), 3.0, stream=stream)
        for y in (2, 5, 16):
            if trace_coupled(path, y).final.y != distinct_ancestors(path, y):
                failures += 1
    return failures == 0, {
        "replicates": reps,
        "sample_sizes": [2, 5, 16],
        "failures": failures,
        "runtime_limit_s": 120.0,
    }


def c08_moment_duality(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    reps = _reps(20_000, scale, floor=500)
    st = moment_duality_stat(c, x=0.3, y=5, horizon=2.0, replicates=reps, seed=derive_key(seed, "duality"))
    ok = st.gap < 3.0 * st.pooled_se
    return ok, {
        "replicates": reps,
        "lhs": st.lhs,
        "rhs": st.rhs,
        "gap": st.gap,
        "pooled_se": st.pooled_se,
        "runtime_limit_s": 120.0,
    }


def c09_fixation_frequency(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    reps = _reps(5000, scale, floor=200)
    details = {}
    ok = True
    for w0 in (0.2, 0.5, 0.8):
        sides, _ = two_type_fixation(
            c, w0, 1.0, t_max=200.0, replicates=reps, seed=derive_key(seed, "fixation", int(w0 * 10))
        )
        unfixed = int((sides == 0).sum())
        p_hat = float((sides == 1).mean())
        half_width = Z_99 * math.sqrt(w0 * (1.0 - w0) / reps)
        good = unfixed == 0 and abs(p_hat - w0) <= half_width
        details[f"w0={w0}"] = {
            "p_hat": p_hat,
            "ci_half_width": half_width,
            "unfixed": unfixed,
        }
        ok = ok and good
    return ok, {"replicates": reps, "cases": details}


def c10_quasi_fixation(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    reps = _reps(2000, scale, floor=100)
    sweep = [6.0, 12.0, 24.0, 48.0, 96.0]
    t_max = sweep[-1]
    taus = np.empty(reps)
    for r in range(reps):
        path = simulate_lookdown(
            c,
            1.0,
            4,
            two_types(0.5),
            t_max,
            seed=derive_key(seed, "quasi-fix", r),
            track_tau=(4,),
            stop_after_taus=True,
        )
        taus[r] = path.tau[4]
    fractions = [float((taus <= t).mean()) for t in sweep]
    monotone = all(a <= b for a, b in zip(fractions, fractions[1:]))
    ok = monotone and fractions[-1] > 0.95
    return ok, {
        "replicates": reps,
        "sweep_T": sweep,
        "fraction_reached": fractions,
    }


def c11_dust(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)  # death marginal puts no mass at 1
    reps = _reps(10_000, scale, floor=500)
    horizon = 1.0
    diffs = np.empty(reps)
    untouched = np.empty(reps)
    for r in range(reps):
        path = simulate_lookdown(
            c, 1.0, 1, two_types(0.5), horizon, seed=derive_key(seed, "dust", r)
        )
        free = all(len(j) == 0 for j in path.participants)
        product = float(np.prod(1.0 - path.zbar)) if len(path.zbar) else 1.0
        untouched[r] = 1.0 if free else 0.0
        diffs[r] = untouched[r] - product
    se = diffs.std(ddof=1) / math.sqrt(reps)
    gap = abs(diffs.mean())
    ok = gap <= 3.0 * se and untouched.mean() > 0.0
    return ok, {
        "replicates": reps,
        "untouched_freq": float(untouched.mean()),
        "product_mean": float(untouched.mean() - diffs.mean()),
        "gap": float(gap),
        "se_of_diff": float(se),
    }


def c12_ergodicity(seed: int, scale: float):
    c = uniform_birth_characteristic(1.0)
    reps = _reps(10_000, scale, floor=500)
    finals_low = ps.simulate_pop_finals(c, 0.1, 50.0, reps, derive_key(seed, "ergodic-lo"))
    finals_high = ps.simulate_pop_finals(c, 10.0, 50.0, reps, derive_key(seed, "ergodic-hi"))
    tv = binned_tv(finals_low, finals_high, bins=64)
    sample_t = max(200.0, 10_000.0 * scale)
    stat = ps.stationary_stats(c, 1.0, burn_in=50.0, sample_t=sample_t, seed=derive_key(seed, "ergodic-avg"))
    mean_gap = abs(stat.time_avg_mean - 1.0)
    ok = tv < 0.05 and mean_gap < 0.05
    return ok, {
        "replicates_per_start": reps,
        "tv_64bins": tv,
        "time_avg_mean": stat.time_avg_mean,
        "mean_rel_gap": mean_gap,
        "sample_t": sample_t,
    }


def c13_closedness(seed: int, scale: float):
    reps = _reps(8000, scale, floor=300)
    report = closedness_study(
        derive_key(seed, "closedness"), eps_sweep=(0.1, 0.05, 0.025), replicates=reps
    )
    ok = report["strictly_decreasing"] and report["final_ks"] < 0.05
    return ok, {
        "replicates": reps,
        "ks_table": [[r["eps"], r["ks"]] for r in report["rows"]],
        "final_ks": report["final_ks"],
    }


def c14_wf_study(seed: int, scale: float, out_dir: str | None = None):
    import tempfile

    reps = _reps(1000, scale, floor=100)
    if out_dir is None:
        tmp = tempfile.mkdtemp(prefix="varfv-wf-")
        out_dir = tmp
    report = wf_study(out_dir, derive_key(seed, "wf"), fit_replicates=reps)
    fit = report["decay_fit"]
    svg_ok = all(os.path.exists(p) for p in report["svg"].values())
    ok = fit["rel_err"] < 0.15 and svg_ok and len(report["svg"]) == 4
    return ok, {
        "fit_replicates": reps,
        "lambda_hat": fit["lambda_hat"],
        "lambda_fit": fit["lambda_fit"],
        "rel_err": fit["rel_err"],
        "svg_count": len(report["svg"]),
    }


def c15_prelimit(seed: int, scale: float):
    # frequent small births make the floor effects at m=100 easy to resolve
    c = dense_small_births(rate=16.0, cap=0.075)
    reps = _reps(1000, scale, floor=100)
    horizon = 5.0
    limit = ps.simulate_pop_finals(c, 1.0, horizon, reps, derive_key(seed, "prelimit-limit"))
    coarse = simulate_ib_size_finals(c, 100, 1.0, horizon, reps, derive_key(seed, "prelimit-100"))
    fine = simulate_ib_size_finals(c, 1000, 1.0, horizon, reps, derive_key(seed, "prelimit-1000"))
    ks_coarse = ks_distance(coarse, limit)
    ks_fine = ks_distance(fine, limit)
    ok = ks_fine < ks_coarse
    return ok, {
        "replicates": reps,
        "ks_m100": ks_coarse,
        "ks_m1000": ks_fine,
    }


def c16_determinism(seed: int, scale: float):
    names = [name for name, _ in CRITERIA if name != "c16_determinism"]
    r1 = render_report(run_verify(seed, scale=scale, criteria=names, enforce_runtime=False))
    r2 = render_report(run_verify(seed, scale=scale, criteria=names, enforce_runtime=False))
    ok = r1 == r2
    return ok, {"bytes": len(r1), "identical": ok, "inner_scale": scale}


CRITERIA = [
    ("c01_balance_validation", c01_balance_validation),
    ("c02_insertion_map", c02_insertion_map),
    ("c03_sandwich_bounds", c03_sandwich_bounds),
    ("c04_positivity", c04_positivity),
    ("c05_generator_consistency", c05_generator_consistency),
    ("c06_frequency_martingale", c06_frequency_martingale),
    ("c07_coupled_duality", c07_coupled_duality),
    ("c08_moment_duality", c08_moment_duality),
    ("c09_fixation_frequency", c09_fixation_frequency),
    ("c10_quasi_fixation", c10_quasi_fixation),
    ("c11_dust", c11_dust),
    ("c12_ergodicity", c12_ergodicity),
    ("c13_closedness", c13_closedness),
    ("c14_wf_study", c14_wf_study),
    ("c15_prelimit", c15_prelimit),
    ("c16_determinism", c16_determinism),
]

DEFAULT_SEED = 20250810


def run_verify(
    seed: int = DEFAULT_SEED,
    scale: float = 1.0,
    criteria=None,
    out_dir: str | None = None,
    enforce_runtime: bool | None = None,
) -> dict:
    """Run the verification suite and return the report dictionary.

    Runtime budgets are enforced only at scale 1 (or when explicitly
    requested).  The report is free of timestamps and machine identifiers
    so rendering it is deterministic in (seed, scale, criteria).
    """
    if enforce_runtime is None:
        enforce_runtime = scale == 1.0
    selected = [(n, f) for n, f in CRITERIA if criteria is None or n in set(criteria)]
    results = []
    for name, fn in selected:
        t0 = time.perf_counter()
        if name == "c14_wf_study" and out_dir is not None:
            passed, stats = fn(seed, scale, out_dir=os.path.join(out_dir, "wf"))
        else:
            passed, stats = fn(seed, scale)
        elapsed = time.perf_counter() - t0
        limit = stats.get("runtime_limit_s")
        if enforce_runtime and limit is not None and elapsed >= limit:
            passed = False
            stats = dict(stats, runtime_exceeded=True)
        results.append(CheckResult(name, passed, elapsed, stats))
    report = {
        "suite": "varfv-verify",
        "seed": seed,
        "scale": scale,
        "criteria": [r.to_json() for r in results],
        "all_passed": all(r.passed for r in results),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "verify_report.json"), "wb") as fh:
            fh.write(render_report(report))
    return report


def render_report(report: dict) -> bytes:
    """Stable bytes for a report: sorted keys, fixed float repr, no dates."""
    return json.dumps(report, sort_keys=True, indent=2).encode()
