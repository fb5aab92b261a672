"""Command-line entry point.

Subcommands: run (one scenario), sweep (beta or V grid with seed
replication), thermal (long-run flows vs the heat-flow reference), validate
(numerical property suite). Exit codes: 0 ok, 2 bad configuration,
3 instability verdict, 4 validation failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ScenarioError, load_bundled, load_scenario
from .experiments import fluid_compare, run_scenario, sweep, sweep_table, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_VALIDATION = 4


def _load(args):
    path = Path(args.config)
    if path.exists():
        return load_scenario(path)
    return load_bundled(str(args.config))


def _policy_overrides(args) -> dict | None:
    if args.policy is None and args.beta is None and args.v is None:
        return None
    kind = args.policy or ("hd" if args.beta is not None else "vbp")
    doc = {"kind": kind}
    if args.beta is not None:
        doc["beta"] = args.beta
    if args.v is not None:
        doc["v"] = args.v
    return doc


def cmd_run(args) -> int:
    cfg = _load(args)
    override = None
    if args.set_capacity:
        key, _, value = args.set_capacity.partition("=")
        override = {key: float(value)}
    record, metrics, _ = run_scenario(
        cfg, seed=args.seed, horizon=args.horizon,
        policy=_policy_overrides(args), out_dir=args.out_dir, fmt=args.format,
        capacity_override=override)
    print(json.dumps({**record.to_dict(), "flow_residual": metrics.flow_residual},
                     indent=2))
    return EXIT_UNSTABLE if record.verdict != "stable" else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    grid = [float(x) for x in args.grid.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    records = sweep(cfg, args.param, grid, seeds, out_dir=args.out_dir)
    print(json.dumps(sweep_table(records, sorted(grid)), indent=2))
    return EXIT_OK


def cmd_thermal(args) -> int:
    cfg = _load(args)
    report = fluid_compare(cfg, beta=args.beta, seed=args.seed,
                           horizon=args.horizon)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{cfg.name}_thermal_beta{args.beta:g}.json", "w") as fh:
            json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return EXIT_UNSTABLE if report["verdict"] != "stable" else EXIT_OK


def cmd_validate(args) -> int:
    report = validate(seed=args.seed, trials=args.trials)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "validation.json", "w") as fh:
            json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["all_passed"] else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatnet",
                                description="Routing-policy simulator and heat-calculus reference solver")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help="scenario file path or bundled scenario name")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--horizon", type=int, default=None)
        sp.add_argument("--out-dir", default=None)

    sp = sub.add_parser("run", help="simulate one scenario")
    common(sp)
    sp.add_argument("--policy", choices=["hd", "bp", "vbp"], default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--v", type=float, default=None)
    sp.add_argument("--format", default="csv,json")
    sp.add_argument("--set-capacity", default=None, metavar="EDGE=VALUE",
                    help="override one edge capacity, e.g. u2->d=12")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="beta or V grid with seed replication")
    common(sp)
    sp.add_argument("--param", choices=["beta", "v"], required=True)
    sp.add_argument("--grid", required=True, help="comma-separated values")
    sp.add_argument("--seeds", default="0,1,2,3,4")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("thermal", help="compare long-run flows to the heat-flow reference")
    common(sp)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.set_defaults(func=cmd_thermal)

    sp = sub.add_parser("validate", help="run the numerical property suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--out-dir", default=None)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
