"""Command line entry point: ``decentopt {gen-graph,check-matrix,run,reproduce}``."""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .graph import Graph, GraphError, random_connected
from .mixing import build_pair, verify_assumption1, write_matrix_csv
from .scenarios import BUILTIN, AssumptionError, ConfigError, execute, load_scenario, serialize_scenario


def _add_overrides(p):
    p.add_argument("--out", help="output directory (default runs/<name>)")
    p.add_argument("--seed", type=int, help="override both graph_seed and data_seed")
    p.add_argument("--override-assumptions", action="store_true",
                   help="run even if the mixing-matrix check or the EXTRA step bound fails")


def build_parser():
    parser = argparse.ArgumentParser(prog="decentopt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="write a random connected graph as an edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=float, required=True, help="connectivity ratio in (0, 1]")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="edge-list file (default: stdout)")

    p = sub.add_parser("check-matrix", help="print the mixing-matrix assumption report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="edge-list file")
    src.add_argument("--n", type=int, help="generate a graph with --r/--seed instead")
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--strategy", choices=("metropolis", "laplacian"), default="metropolis")
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--tau", type=float)
    p.add_argument("--wtilde", choices=("default", "overshoot"), default="default")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--export", metavar="DIR", help="write W.csv and Wt.csv here")

    p = sub.add_parser("run", help="execute a scenario config file")
    p.add_argument("--config", required=True)
    _add_overrides(p)

    p = sub.add_parser("reproduce", help="execute a built-in scenario")
    p.add_argument("name", choices=sorted(BUILTIN))
    p.add_argument("--print-config", action="store_true", help="print the scenario config and exit")
    _add_overrides(p)
    return parser


def _apply_overrides(s, args):
    if args.seed is not None:
        s = replace(s, graph_seed=args.seed, data_seed=args.seed)
    if args.out:
        s = replace(s, out=args.out)
    if args.override_assumptions:
        s = replace(s, override_assumptions=True)
    return s


def _print_summary(art):
    print(f"scenario {art.scenario.name}: wrote {art.scenario.out_dir}")
    for solver, info in art.summary["solvers"].items():
        if info["status"] == "failed":
            print(f"  {solver:10s} FAILED  {info['error']}")
        else:
            print(f"  {solver:10s} alpha={info['alpha']:.6g}  iterations={info['iterations']}  "
                  f"final relative residual={info['final_relative_residual']:.3e}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-graph":
            text = random_connected(args.n, args.r, args.seed).to_edge_list()
            if args.out:
                with open(args.out, "w", newline="\n") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return 0

        if args.command == "check-matrix":
            if args.graph:
                with open(args.graph) as fh:
                    g = Graph.from_edge_list(fh.read())
            else:
                g = random_connected(args.n, args.r, args.seed)
            pair = build_pair(g, args.strategy, args.eps, args.tau, args.wtilde)
            report = verify_assumption1(pair.W, pair.Wt, g, args.tol)
            print(report.format())
            print(f"sigma_max(W - 11^T/n) = {pair.sigma_gap:.12g}")
            print(f"lambda_min(Wt) = {pair.lambda_min_wt:.12g}")
            if args.export:
                os.makedirs(args.export, exist_ok=True)
                write_matrix_csv(os.path.join(args.export, "W.csv"), pair.W)
                write_matrix_csv(os.path.join(args.export, "Wt.csv"), pair.Wt)
            return 0 if report.passed else 1

        if args.command == "run":
            scenario = _apply_overrides(load_scenario(args.config), args)
        else:
            scenario = _apply_overrides(BUILTIN[args.name], args)
            if args.print_config:
                sys.stdout.write(serialize_scenario(scenario))
                return 0
        art = execute(scenario)
        _print_summary(art)
        return 0
    except (ConfigError, GraphError, AssumptionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
