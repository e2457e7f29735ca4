"""Compare the two NH0 baseline modes with DAIPW on the base design.

    python scripts/nh0_modes.py --reps 500 --horizon 5000
"""
import argparse

import numpy as np

from dbi.config import study_config
from dbi.estimators import daipw_report, nh0_report
from dbi.montecarlo import generate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--seed", type=int, default=20230601)
    args = p.parse_args(argv)

    cfg = study_config(horizon=args.horizon, replications=args.reps, seed=args.seed)
    rows = {"paper_text": [], "adaptive": [], "DAIPW": []}
    for tr in generate(cfg, range(args.reps)):
        for mode in ("paper_text", "adaptive"):
            rows[mode].append([nh0_report(tr, a, mode).qhat for a in range(2)])
        rows["DAIPW"].append([daipw_report(tr, a).qhat for a in range(2)])
    truths = cfg.outcome.means
    print(f"{'estimator':<12} {'mean arm1':>10} {'mean arm2':>10}   truth {truths}")
    for name, vals in rows.items():
        m = np.mean(np.asarray(vals, dtype=float), axis=0)
        print(f"{name:<12} {m[0]:>10.4f} {m[1]:>10.4f}")


if __name__ == "__main__":
    main()
