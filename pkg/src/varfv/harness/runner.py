"""Dispatch a validated RunConfig to the simulators and write artifacts.

Replicate farming derives one seed per replicate index from the master
seed, so results are independent of worker scheduling; merged outputs are
keyed by replicate index.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from joblib import Parallel, delayed

from .. import forward as fw
from .. import lookdown as ld
from .. import popsize as ps
from .. import prelimit as pl
from ..characteristics import Characteristic, CharacteristicError, truncate
from ..dual import build_environment, environment_to_jsonl, moment_duality_stat
from ..rng import derive_key
from ..stats import summarize
from .config import RunConfig
from .studies import closedness_study, wf_study
from .verify import render_report, run_verify


class RunError(RuntimeError):
    pass


def _prepare_characteristic(config: RunConfig) -> Characteristic:
    c = config.characteristic
    if c is None:
        raise RunError("this experiment kind needs a characteristic")
    if math.isinf(c.jump.total_rate()):
        if config.eps is None:
            raise RunError(
                "characteristic has infinite total jump rate; pass eps (CLI --eps or config "
                "'eps') to truncate it to finite activity"
            )
        c, _ = truncate(c, config.eps)
    elif config.eps is not None:
        c, _ = truncate(c, config.eps)
    return c


def _out_dir(config: RunConfig) -> str:
    out = config.out or "varfv-out"
    os.makedirs(out, exist_ok=True)
    return out


def _farm(fn, replicates: int, jobs: int):
    if jobs == 1 or replicates == 1:
        return [fn(r) for r in range(replicates)]
    return Parallel(n_jobs=jobs)(delayed(fn)(r) for r in range(replicates))


def _write(path: str, text: str) -> str:
    with open(path, "w") as fh:
        fh.write(text)
    return path


def run(config: RunConfig) -> dict:
    """Execute one experiment; returns a summary dict (also written to disk)."""
    handlers = {
        "popsize": _run_popsize,
        "forward": _run_forward,
        "lookdown": _run_lookdown,
        "prelimit": _run_prelimit,
        "dual": _run_dual,
        "verify-suite": _run_verify_kind,
        "wf-study": _run_wf_study,
        "closedness-study": _run_closedness,
    }
    summary = handlers[config.kind](config)
    out = _out_dir(config)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    return summary


def _run_popsize(config: RunConfig) -> dict:
    c = _prepare_characteristic(config)
    out = _out_dir(config)
    finals = np.empty(config.replicates)

    def one(r: int):
        path = ps.simulate_pop(
            c, config.n0, config.horizon, seed=derive_key(config.seed, "popsize", r), grid=config.grid
        )
        return path

    paths = _farm(one, config.replicates, config.jobs)
    for r, path in enumerate(paths):
        finals[r] = path.final_n
    _write(os.path.join(out, "popsize_path0.csv"), ps.path_to_csv(paths[0]))
    np.savetxt(os.path.join(out, "popsize_finals.csv"), finals, header="N_T", comments="")
    return {
        "kind": "popsize",
        "replicates": config.replicates,
        "final_n": summarize(finals).to_json() if config.replicates > 1 else float(finals[0]),
        "min_n": min(p.min_n for p in paths),
    }


def _atoms_measure(config: RunConfig) -> fw.TypeMeasure:
    atoms = config.params.get("atoms")
    if atoms is None:
        return fw.two_types(0.5, config.n0)
    labels = tuple(a[0] for a in atoms)
    masses = tuple(float(a[1]) for a in atoms)
    return fw.TypeMeasure(labels, masses)


def _run_forward(config: RunConfig) -> dict:
    c = _prepare_characteristic(config)
    out = _out_dir(config)
    init = _atoms_measure(config)
    track = config.params.get("track")

    def one(r: int):
        return fw.simulate_forward(
            c,
            init,
            config.horizon,
            seed=derive_key(config.seed, "forward", r),
            grid=config.grid,
            track=track,
        )

    paths = _farm(one, config.replicates, config.jobs)
    _write(os.path.join(out, "forward_path0.csv"), fw.path_to_csv(paths[0]))
    finals = np.array([p.w_grid[-1] for p in paths])
    return {
        "kind": "forward",
        "replicates": config.replicates,
        "tracked_type": paths[0].types[paths[0].track_idx],
        "w_final": summarize(finals).to_json() if config.replicates > 1 else float(finals[0]),
    }


def _run_lookdown(config: RunConfig) -> dict:
    c = _prepare_characteristic(config)
    out = _out_dir(config)
    init = _atoms_measure(config)
    n_levels = config.params["n_levels"]
    track_tau = tuple(config.params.get("track_tau") or ())

    def one(r: int):
        return ld.simulate_lookdown(
            c,
            config.n0,
            n_levels,
            init,
            config.horizon,
            seed=derive_key(config.seed, "lookdown", r),
            track_tau=track_tau,
        )

    paths = _farm(one, config.replicates, config.jobs)
    _write(os.path.join(out, "lookdown_events0.csv"), ld.event_log_csv(paths[0]))
    freq = np.array([p.type_frequency(p.alphabet[0]) for p in paths])
    summary = {
        "kind": "lookdown",
        "replicates": config.replicates,
        "n_levels": n_levels,
        "first_type_freq": summarize(freq).to_json() if config.replicates > 1 else float(freq[0]),
    }
    if track_tau:
        summary["tau"] = {
            str(n): summarize(np.array([p.tau[n] for p in paths])).to_json()
            if config.replicates > 1
            else {str(n): paths[0].tau[n]}
            for n in track_tau
        }
    return summary


def _run_prelimit(config: RunConfig) -> dict:
    c = _prepare_characteristic(config)
    out = _out_dir(config)
    weights = config.params["weights"]
    m = config.params["m"]

    def one(r: int):
        return pl.simulate_ib(
            c,
            m,
            config.n0,
            weights,
            config.horizon,
            seed=derive_key(config.seed, "prelimit", r),
            grid=config.grid,
        )

    paths = _farm(one, config.replicates, config.jobs)
    _write(os.path.join(out, "prelimit_path0.csv"), pl.path_to_csv(paths[0]))
    finals = np.array([p.n_over_m()[-1] for p in paths])
    return {
        "kind": "prelimit",
        "m": m,
        "replicates": config.replicates,
        "rescaled_final": summarize(finals).to_json() if config.replicates > 1 else float(finals[0]),
        "extinct_runs": int(sum(p.extinct for p in paths)),
    }


def _run_dual(config: RunConfig) -> dict:
    c = _prepare_characteristic(config)
    out = _out_dir(config)
    env = build_environment(c, config.n0, config.horizon, derive_key(config.seed, "dual-env-sample"))
    _write(os.path.join(out, "environment0.jsonl"), environment_to_jsonl(env))
    st = moment_duality_stat(
        c,
        x=float(config.params["x"]),
        y=int(config.params["y"]),
        horizon=config.horizon,
        replicates=config.replicates,
        seed=config.seed,
        n0=config.n0,
    )
    return {
        "kind": "dual",
        "replicates": config.replicates,
        "lhs_forward_moment": st.lhs,
        "rhs_coalescent_moment": st.rhs,
        "gap": st.gap,
        "pooled_se": st.pooled_se,
        "within_3se": st.gap < 3.0 * st.pooled_se,
    }


def _run_verify_kind(config: RunConfig) -> dict:
    out = _out_dir(config)
    report = run_verify(
        seed=config.seed,
        scale=float(config.params.get("scale", 1.0)),
        criteria=config.params.get("criteria"),
        out_dir=out,
    )
    return {
        "kind": "verify-suite",
        "all_passed": report["all_passed"],
        "report": os.path.join(out, "verify_report.json"),
        "criteria": {c["name"]: c["passed"] for c in report["criteria"]},
    }


def _run_wf_study(config: RunConfig) -> dict:
    out = _out_dir(config)
    report = wf_study(out, config.seed, fit_replicates=int(config.params["fit_replicates"]))
    return {"kind": "wf-study", **report}


def _run_closedness(config: RunConfig) -> dict:
    report = closedness_study(
        config.seed,
        eps_sweep=tuple(config.params["eps_sweep"]),
        base=config.characteristic,
        replicates=config.replicates if config.replicates > 1 else 4000,
    )
    return {"kind": "closedness-study", **report}
