"""Run the two-arm Monte Carlo designs and write results and histograms per design.

    python scripts/reproduce_studies.py --out results/ --replications 2000
"""
import argparse
import logging
from dataclasses import replace
from pathlib import Path

from dbi.config import study_config
from dbi.io import metrics_json, write_estimates, write_histograms, write_json, write_results
from dbi.montecarlo import aggregate, histograms, run_replications

DESIGNS = {
    "base": dict(),
    "zero_margin": dict(margin=0.0),
    "margin_0.1": dict(margin=0.1),
    "negative_binomial": dict(finite="negative_binomial"),
    "rounded_pareto": dict(finite="rounded_pareto"),
}


def run_design(name, horizon, replications, seed, workers, out):
    cfg = study_config(horizon=horizon, replications=replications, seed=seed, **DESIGNS[name])
    per_rep = run_replications(cfg, workers=workers)
    flat = [r for reps in per_rep for r in reps]
    truths = cfg.truths()
    metrics = aggregate(flat, truths)
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "config.json", cfg.to_dict())
    write_estimates(d / "estimates.csv", per_rep)
    write_results(d / "results.csv", metrics)
    write_json(d / "metrics.json", metrics_json(metrics))
    write_histograms(d / "histogram.csv", histograms(flat, truths))
    return metrics


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--replications", type=int, default=2000)
    p.add_argument("--horizon", type=int, default=5000)
    p.add_argument("--seed", type=int, default=20230601)
    p.add_argument("--workers", type=int)
    p.add_argument("--designs", nargs="+", choices=sorted(DESIGNS), default=list(DESIGNS))
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    print(f"{'design':<18} {'estimator':<8} {'target':<16} {'bias':>9} {'sd':>8} {'cover':>7} {'ks':>7}")
    for name in args.designs:
        metrics = run_design(name, args.horizon, args.replications, args.seed, args.workers, args.out)
        for (est, target), m in sorted(metrics.items()):
            print(f"{name:<18} {est:<8} {target:<16} {m.bias:>9.4f} {m.sd:>8.4f} "
                  f"{m.coverage:>7.4f} {m.ks_statistic:>7.4f}")


if __name__ == "__main__":
    main()
