"""Command-line entry point.

Subcommands: validate | simulate | lookdown | dual | verify | study | plot.
Experiments are described by JSON configs (see README for the schema);
--seed/--out/--eps/--replicates override the config values.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..characteristics import Characteristic, CharacteristicError, validate
from ..shapes import ShapeError
from .config import KINDS, ConfigError, RunConfig
from .muller import muller_plot
from .runner import RunError, run


def _add_common(p: argparse.ArgumentParser, need_config: bool = True):
    p.add_argument("--config", required=need_config, help="path to a JSON run config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--eps", type=float, help="override the truncation cutoff")
    p.add_argument("--replicates", type=int, help="override the replicate count")


def _load_config(args, expect_kinds) -> RunConfig:
    with open(args.config) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: top level must be a JSON object")
    for key in ("seed", "out", "eps", "replicates"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    cfg = RunConfig.from_dict(raw)
    if cfg.kind not in expect_kinds:
        raise ConfigError(
            f"config.kind: {cfg.kind!r} not usable here (expected one of {expect_kinds})"
        )
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="varfv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a characteristic JSON file")
    p_val.add_argument("--config", required=True, help="path to a characteristic JSON")

    p_sim = sub.add_parser("simulate", help="run a popsize/forward/prelimit config")
    _add_common(p_sim)

    p_ld = sub.add_parser("lookdown", help="run a lookdown config")
    _add_common(p_ld)

    p_dual = sub.add_parser("dual", help="run a moment-duality config")
    _add_common(p_dual)

    p_ver = sub.add_parser("verify", help="run the verification suite")
    _add_common(p_ver, need_config=False)
    p_ver.add_argument("--scale", type=float, default=1.0, help="replicate scale factor")

    p_study = sub.add_parser("study", help="run a wf-study or closedness-study config")
    _add_common(p_study)

    p_plot = sub.add_parser("plot", help="render a trajectory CSV as a Muller SVG")
    p_plot.add_argument("--trajectory", required=True, help="trajectory CSV (t,N,mass_*)")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    p_plot.add_argument("--title", default=None)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, CharacteristicError, ShapeError, RunError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "validate":
        with open(args.config) as fh:
            c = Characteristic.from_json(json.load(fh))
        report = validate(c)
        if report.ok:
            print("ok")
            return 0
        for v in report.violations:
            print(f"violation: {v}")
        return 1

    if args.command == "simulate":
        cfg = _load_config(args, ("popsize", "forward", "prelimit"))
        summary = run(cfg)
        print(json.dumps(summary, sort_keys=True, indent=2))
        return 0

    if args.command == "lookdown":
        cfg = _load_config(args, ("lookdown",))
        print(json.dumps(run(cfg), sort_keys=True, indent=2))
        return 0

    if args.command == "dual":
        cfg = _load_config(args, ("dual",))
        summary = run(cfg)
        print(json.dumps(summary, sort_keys=True, indent=2))
        return 0 if summary["within_3se"] else 1

    if args.command == "verify":
        if args.config:
            cfg = _load_config(args, ("verify-suite",))
        else:
            raw = {"kind": "verify-suite", "seed": args.seed if args.seed is not None else 20250810}
            if args.out:
                raw["out"] = args.out
            if args.scale != 1.0:
                raw["scale"] = args.scale
            cfg = RunConfig.from_dict(raw)
        summary = run(cfg)
        for name, passed in summary["criteria"].items():
            print(f"{'PASS' if passed else 'FAIL'} {name}")
        print(f"report: {summary['report']}")
        return 0 if summary["all_passed"] else 1

    if args.command == "study":
        cfg = _load_config(args, ("wf-study", "closedness-study"))
        summary = run(cfg)
        print(json.dumps(summary, sort_keys=True, indent=2))
        return 0

    if args.command == "plot":
        muller_plot(args.trajectory, args.out, title=args.title)
        print(args.out)
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
