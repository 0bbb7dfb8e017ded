#!/usr/bin/env python3
"""Pilot run for the d=4 return-probability anomaly experiment.

Runs the law-vs-uniform comparison at a reduced walker budget and reports,
per horizon, the scaled return probabilities, their ratio, a one-sided 95%
lower confidence bound for the ratio, and a wall-clock projection to the
full budget.  Use this to size the full run before committing to it.

Example:
    python scripts/pilot_anomaly.py --walkers 1000000 --n 64 --threads 8
"""

import argparse
import math
import time

from rcmlab.config import ExperimentConfig
from rcmlab.experiments import anomaly_experiment

HEAVY_LAW = {"id": "two-atom-heavy", "atoms": [[1.0, 0.7], [0.015625, 0.3]]}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--walkers", type=int, default=1_000_000)
    ap.add_argument("--n", type=int, nargs="+", default=[64])
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=8)
    ap.add_argument("--full-budget", type=int, default=10_000_000,
                    help="walker count to project the runtime to")
    args = ap.parse_args()

    cfg = ExperimentConfig(
        law=HEAVY_LAW,
        d=args.d,
        seeds=(args.seed,),
        horizons=tuple(args.n),
        walkers=args.walkers,
        threads=args.threads,
    )
    t0 = time.perf_counter()
    result = anomaly_experiment(cfg)
    elapsed = time.perf_counter() - t0

    print(f"pilot: d={args.d} walkers={args.walkers} seed={args.seed} "
          f"threads={args.threads}")
    print(f"{'n':>4} {'hits_law':>9} {'hits_base':>9} {'ratio':>8} "
          f"{'lcb95':>8} {'note'}")
    for row in result.row_dicts():
        ratio = row["ratio"]
        if math.isnan(ratio):
            print(f"{row['n']:>4} {row['hits_law']:>9} {row['hits_base']:>9} "
                  f"{'nan':>8} {'nan':>8} zero hits -- raise the budget")
            continue
        # one-sided 95% lower bound via the delta method on log(ratio)
        rel = row["ratio_stderr"] / ratio
        lcb = ratio * math.exp(-1.645 * rel)
        note = "PASS bar (>=2)" if lcb >= 2.0 else "below bar"
        print(f"{row['n']:>4} {row['hits_law']:>9} {row['hits_base']:>9} "
              f"{ratio:>8.3f} {lcb:>8.3f} {note}")

    scale = args.full_budget / args.walkers
    print(f"wall: {elapsed:.1f}s at {args.walkers} walkers "
          f"-> projected {elapsed * scale / 60:.1f} min at {args.full_budget}")
    for w in result.provenance["warnings"]:
        print(f"warning: {w}")


if __name__ == "__main__":
    main()
