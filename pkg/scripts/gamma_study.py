"""Coupled limit epsilon_n = 4^-n, delta_n = 2^-n on the point-transport setup.

With w = 1 and unit masses in two cells the unregularized cost is the
distance between the cell centers, printed as the reference.
"""

import argparse
import logging
from pathlib import Path

from threadpoolctl import threadpool_limits

from beckmann.config import parse_config
from beckmann.studies import point_transport_reference, run_gamma_study

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIGS / "point_transport.json"))
    ap.add_argument("--n-max", type=int, default=6)
    ap.add_argument("--out-dir", default="out/gamma")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = parse_config(args.config)
    ref = point_transport_reference(cfg)
    with threadpool_limits(limits=args.threads):
        rows = run_gamma_study(cfg, args.n_max, reference=ref, out_dir=args.out_dir, workers=args.threads)
    if ref is not None:
        print(f"reference cost {ref:.6f}")
    print(f"{'n':>2} {'epsilon':>9} {'delta':>9} {'coupling':>9} {'cost':>9} {'to last':>9} {'iters':>6}")
    for r in rows:
        print(
            f"{r['n']:2d} {r['epsilon']:9.2e} {r['delta']:9.2e} {r['coupling']:9.2e} "
            f"{r['transport_cost']:9.5f} {r['distance_to_last']:9.5f} {r['iterations']:6d}"
        )


if __name__ == "__main__":
    main()
