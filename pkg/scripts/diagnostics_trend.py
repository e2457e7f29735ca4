"""Median weighting diagnostics A1 to A5 over a grid of horizons, written as CSV.

    python scripts/diagnostics_trend.py --horizons 500 1000 5000 10000 --reps 50
"""
import argparse
import csv
import sys

import numpy as np

from dbi.config import study_config
from dbi.montecarlo import generate
from dbi.weighting import condition_diagnostics

COLUMNS = ("a1", "a2", "a3", "a4", "a5")


def medians(horizon, reps, finite, delta, seed):
    cfg = study_config(finite=finite, horizon=horizon, replications=reps, seed=seed)
    trs = generate(cfg, range(reps))
    reports = [condition_diagnostics(tr, cfg.delay, delta=delta) for tr in trs]
    for arm in range(cfg.n_arms):
        yield arm, {c: float(np.median([getattr(r, c)[arm] for r in reports])) for c in COLUMNS}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--horizons", type=int, nargs="+", default=[500, 1000, 2000, 5000, 10_000])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--finite", choices=["none", "negative_binomial", "rounded_pareto"], default="rounded_pareto")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=20230601)
    p.add_argument("--out", help="CSV path (default: stdout)")
    args = p.parse_args(argv)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["horizon", "arm", *COLUMNS])
    for horizon in args.horizons:
        for arm, med in medians(horizon, args.reps, args.finite, args.delta, args.seed):
            w.writerow([horizon, arm + 1, *(repr(med[c]) for c in COLUMNS)])
        fh.flush()
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
