"""Command line entry point: ``beckmann {solve,sweep,convergence,gamma} CONFIG``."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys

from threadpoolctl import threadpool_limits

from beckmann.config import ConfigError, parse_config
from beckmann.studies import (
    point_transport_reference,
    run_convergence_study,
    run_gamma_study,
    run_sweep,
    solve_config,
)

EXIT_OK = 0
EXIT_MAX_ITERS = 2
EXIT_LINE_SEARCH = 3
EXIT_CONFIG = 4
EXIT_LINEAR_SOLVE = 5

_EXIT_BY_TERMINATION = {
    "converged": EXIT_OK,
    "max_iters": EXIT_MAX_ITERS,
    "line_search_failed": EXIT_LINE_SEARCH,
    "linear_solve_failed": EXIT_LINEAR_SOLVE,
}
# most severe first
_SEVERITY = [EXIT_LINEAR_SOLVE, EXIT_LINE_SEARCH, EXIT_MAX_ITERS, EXIT_OK]


def exit_code(terminations) -> int:
    codes = {_EXIT_BY_TERMINATION[t] for t in terminations}
    return next((c for c in _SEVERITY if c in codes), EXIT_OK)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON configuration file")
    common.add_argument("--out-dir", help="output directory (overrides output.out_dir)")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads and parallel solves (default 1)")
    common.add_argument("--quiet", action="store_true", help="only print warnings and errors")

    parser = argparse.ArgumentParser(prog="beckmann", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one configuration")
    sweep = sub.add_parser("sweep", parents=[common], help="solve on a grid of (epsilon, delta)")
    sweep.add_argument("--eps", type=float, nargs="+", required=True)
    sweep.add_argument("--delta", type=float, nargs="+", required=True)
    conv = sub.add_parser("convergence", parents=[common], help="residual history per (epsilon, delta)")
    conv.add_argument("--eps", type=float, nargs="+")
    conv.add_argument("--delta", type=float, nargs="+")
    gamma = sub.add_parser("gamma", parents=[common], help="coupled limit epsilon=4^-n, delta=2^-n")
    gamma.add_argument("--n-max", type=int, required=True)
    return parser


def _print_rows(rows, keys):
    print("  ".join(f"{k:>14}" for k in keys))
    for row in rows:
        cells = [f"{row[k]:>14.6g}" if isinstance(row[k], float) else f"{row[k]!s:>14}" for k in keys]
        print("  ".join(cells))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out_dir or cfg.output.out_dir
    workers = max(args.threads, 1)

    with threadpool_limits(limits=workers):
        try:
            if args.command == "solve":
                result = solve_config(cfg, out_dir=out_dir)
                if not args.quiet:
                    _print_rows([result.metrics], ["termination", "iterations", "residual", "transport_cost", "duality_gap"])
                return exit_code([result.termination])
            if args.command == "sweep":
                study = run_sweep(cfg, args.eps, args.delta, out_dir=out_dir, workers=workers)
                if not args.quiet:
                    _print_rows(study.table(), ["epsilon", "delta", "termination", "iterations", "transport_cost"])
                return exit_code([r["termination"] for r in study.table()])
            if args.command == "convergence":
                eps = args.eps or [cfg.params.epsilon]
                deltas = args.delta or [cfg.params.delta]
                table = run_convergence_study(
                    cfg, itertools.product(eps, deltas), out_dir=out_dir, workers=workers
                )
                if not args.quiet:
                    for (e, d), term in table.terminations.items():
                        res = table.series(e, d)
                        print(f"epsilon={e:g} delta={d:g}: {term} after {len(res) - 1} iterations, final residual {res[-1]:.3e}")
                return exit_code(table.terminations.values())
            if args.command == "gamma":
                rows = run_gamma_study(
                    cfg, args.n_max, reference=point_transport_reference(cfg), out_dir=out_dir, workers=workers
                )
                if not args.quiet:
                    _print_rows(rows, ["n", "epsilon", "delta", "coupling", "transport_cost", "termination"])
                return exit_code([r["termination"] for r in rows])
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
