"""Residual histories for the maze and valley setups.

Two families per setup: fixed delta with decreasing epsilon, and fixed
epsilon with decreasing delta. The per-iteration table is written to
``OUT/<setup>_<family>_convergence.csv`` for log-scale plotting.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from beckmann.config import parse_config
from beckmann.studies import run_convergence_study

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FAMILIES = {
    "fixed_delta": [(e, 1e-4) for e in (5e-2, 5e-3, 5e-4)],
    "fixed_eps": [(5e-4, d) for d in (1e-1, 1e-2, 1e-3, 1e-4)],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--setups", nargs="+", default=["maze", "valley"])
    ap.add_argument("--out-dir", default="out/convergence")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    for setup in args.setups:
        cfg = parse_config(CONFIGS / f"{setup}.json")
        for family, pairs in FAMILIES.items():
            run_cfg = replace(cfg, output=replace(cfg.output, name=f"{setup}_{family}"))
            with threadpool_limits(limits=args.threads):
                table = run_convergence_study(run_cfg, pairs, out_dir=args.out_dir, workers=args.threads)
            print(f"== {setup}, {family}")
            for (e, d), term in table.terminations.items():
                res = table.series(e, d)
                print(f"  epsilon={e:.0e} delta={d:.0e}: {term:>18} after {len(res) - 1:4d} iterations, final {res[-1]:.2e}")


if __name__ == "__main__":
    main()
