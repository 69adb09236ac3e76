"""Command-line entry point: ``python3 -m motef <command>``."""

from __future__ import annotations

import argparse
import sys

from .diagnostics import FAMILIES, default_grid, verify_descent_constants
from .errors import ConfigError, ConstructionError, ParseError, SpecError, ValidationError
from .harness import SWEEPABLE, load_config, run_experiment, sweep
from .topology import KINDS, build_topology, validate_mixing


def _run(args) -> int:
    result = run_experiment(load_config(args.config))
    print(" ".join(f"{k}={v}" for k, v in result.summary().items()))
    return 0


def _sweep(args) -> int:
    config = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    result = sweep(config, args.axis, values, parallel=args.parallel, max_workers=args.workers)
    print(result.table())
    print(f"summary: {result.summary_path}")
    return 0 if all(not r["error"] for r in result.rows) else 1


def _verify(args) -> int:
    result = verify_descent_constants(args.family, default_grid(args.family, args.points))
    print(result.summary())
    if args.csv:
        result.to_csv(args.csv)
    return 0 if result.passed else 1


def _topology(args) -> int:
    params = {k: v for k, v in (("p", args.p), ("degree", args.degree), ("rows", args.rows), ("cols", args.cols)) if v is not None}
    topo = build_topology(args.kind, args.n, params, seed=args.seed, weights=args.weights)
    report = validate_mixing(topo.W)
    edges = int(topo.adjacency.sum()) // 2
    print(
        f"kind={topo.kind} n={topo.n} edges={edges} weights={topo.self_weight_scheme} "
        f"rho={topo.rho:.12g} sigma_max_sq={report.sigma_max_sq:.12g} "
        f"symmetry_defect={report.symmetry_defect:.3g} row_sum_defect={report.row_sum_defect:.3g} "
        f"valid={report.passed}"
    )
    if args.csv:
        topo.to_csv(args.csv)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motef", description="Decentralized optimization with compressed gossip.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_run)

    p = sub.add_parser("sweep", help="run a config over several values of one key")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_sweep)

    p = sub.add_parser("verify-constants", help="check a descent-constant system on a log grid")
    p.add_argument("--family", required=True, choices=sorted(FAMILIES))
    p.add_argument("--points", type=int, default=5, help="grid points per axis")
    p.add_argument("--csv", help="write every grid point to this file")
    p.set_defaults(func=_verify)

    p = sub.add_parser("topology-report", help="build a graph and report its mixing properties")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--degree", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", default="metropolis", choices=("metropolis", "lazy"))
    p.add_argument("--csv", help="write W to this file")
    p.set_defaults(func=_topology)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, SpecError, ValidationError, ConstructionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
