"""Command-line front end: run / sweep / fit / gen.

Exit codes follow the harness convention: 0 success, 2 invalid config or
arguments, 3 divergence, 4 nonconvergence within budget.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .network import generate_er_instance, save_instance


def _cmd_run(args):
    outcome = harness.run_experiment(args.config)
    if outcome.message:
        print(outcome.message, file=sys.stderr)
    if outcome.summary:
        print(json.dumps(outcome.summary))
    return outcome.exit_code


def _cmd_sweep(args):
    try:
        cfg = harness.load_config(args.config)
        values = [float(v) for v in args.values.split(",") if v.strip()]
        if not values:
            raise harness.ConfigError("--values is empty")
        outcomes = harness.run_sweep(cfg, args.param, values)
    except (harness.ConfigError, ValueError) as exc:
        print(exc, file=sys.stderr)
        return harness.EXIT_BAD_CONFIG
    report = []
    code = harness.EXIT_OK
    for v, outcome in outcomes:
        report.append({"value": v, "exit_code": outcome.exit_code, **outcome.summary})
        code = max(code, outcome.exit_code)
        if outcome.message:
            print(f"{args.param}={v:g}: {outcome.message}", file=sys.stderr)
    print(json.dumps(report))
    return code


def _cmd_fit(args):
    try:
        slope, r2 = harness.fit_linear_rate(args.metrics)
    except (OSError, ValueError, KeyError) as exc:
        print(exc, file=sys.stderr)
        return harness.EXIT_BAD_CONFIG
    print(json.dumps({"slope": slope, "r2": r2}))
    return harness.EXIT_OK


def _cmd_gen(args):
    try:
        inst = generate_er_instance(
            args.nodes,
            args.p,
            args.flows,
            args.seed,
            interference="node-exclusive" if args.wireless else "none",
        )
        save_instance(inst, args.out)
    except (ValueError, RuntimeError, OSError) as exc:
        print(exc, file=sys.stderr)
        return harness.EXIT_BAD_CONFIG
    print(
        f"wrote {args.out}: {inst.graph.n_nodes} nodes, "
        f"{inst.graph.n_links} links, {inst.n_flows} flows"
    )
    return harness.EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netnum",
        description="Network utility maximization experiments: joint "
        "congestion control, routing and scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the config once per parameter value")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=harness.SWEEPABLE)
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit the linear-rate tail of a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("gen", help="generate a random instance file")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--flows", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--wireless", action="store_true")
    p.set_defaults(func=_cmd_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
