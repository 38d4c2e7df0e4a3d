"""Flow-field sweeps over (epsilon, delta) for the toy, valley and maze setups.

Writes one report/CSV/SVG triple per pair plus a summary table under
``OUT/<setup>/``. Example::

    python3 scripts/param_studies.py --only maze --threads 4
"""

import argparse
import logging
from pathlib import Path

from threadpoolctl import threadpool_limits

from beckmann.config import parse_config
from beckmann.studies import run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

GRIDS = {
    "toy": ([5e-1, 5e-3], [1e-2, 1e-3, 1e-4]),
    "valley": ([5e-3, 5e-5], [1e-1, 1e-3, 1e-5]),
    "maze": ([5e-2, 5e-4], [1e1, 1e-1, 1e-3]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--only", choices=sorted(GRIDS), nargs="+", default=sorted(GRIDS))
    ap.add_argument("--out-dir", default="out/param_studies")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    for name in args.only:
        cfg = parse_config(CONFIGS / f"{name}.json")
        eps, deltas = GRIDS[name]
        with threadpool_limits(limits=args.threads):
            study = run_sweep(cfg, eps, deltas, out_dir=Path(args.out_dir) / name, workers=args.threads)
        print(f"== {name} ({cfg.grid.nx}x{cfg.grid.ny})")
        print(f"{'epsilon':>9} {'delta':>9} {'termination':>12} {'iters':>6} {'cost':>10} {'gap':>10} {'max arrow':>10}")
        for r in study.table():
            print(
                f"{r['epsilon']:9.0e} {r['delta']:9.0e} {r['termination']:>12} {r['iterations']:6d} "
                f"{r['transport_cost']:10.5f} {r['duality_gap']:10.2e} {r['max_arrow_norm']:10.4g}"
            )


if __name__ == "__main__":
    main()
