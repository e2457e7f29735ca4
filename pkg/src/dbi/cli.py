"""Command-line interface.

Exit status: 0 success, 2 configuration error, 3 data error, 64 unknown
subcommand.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, DataError
from .estimators import NH0_MODES
from .io import (
    ESTIMATE_COLUMNS, RESULT_COLUMNS, estimate_rows, evaluate_log, metrics_json,
    read_estimates, read_trajectory, result_rows, write_estimates, write_histograms, write_json,
    write_results, write_trajectory,
)
from .montecarlo import aggregate, generate, histograms, run_replications
from .weighting import WEIGHT_SCHEMES, condition_diagnostics

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_USAGE = 0, 2, 3, 64
COMMANDS = ("simulate", "evaluate", "diagnose", "report")

log = logging.getLogger("dbi")


def _contrast(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad contrast {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dbi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{simulate,evaluate,diagnose,report}")

    s = sub.add_parser("simulate", help="run a Monte Carlo study from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--replications", type=int)
    s.add_argument("--horizon", type=int)
    s.add_argument("--logs", type=int, default=1, help="write trajectory logs for the first N replications")
    s.add_argument("--workers", type=int, help="worker processes (default: DBI_THREADS or CPU count)")

    e = sub.add_parser("evaluate", help="re-estimate from a trajectory log")
    e.add_argument("log")
    e.add_argument("--weights", default="logged", choices=("logged",) + WEIGHT_SCHEMES)
    e.add_argument("--contrast", type=_contrast, action="append", default=[],
                   help="comma-separated contrast coefficients, e.g. 1,-1 (repeatable)")
    e.add_argument("--alpha", type=float, default=0.05, help="1 - confidence level")
    e.add_argument("--nh0-mode", default="paper_text", choices=NH0_MODES)
    e.add_argument("--mu-clip", type=float, default=1e6)
    e.add_argument("--format", default="csv", choices=("csv", "json"))
    e.add_argument("--out", help="write to a file instead of stdout")

    d = sub.add_parser("diagnose", help="plug-in weighting diagnostics")
    d.add_argument("source", help="experiment config (.json) or trajectory log (.csv)")
    d.add_argument("--delta", type=float, default=0.2)
    d.add_argument("--config", help="config supplying the true delay law for a log")
    d.add_argument("--reps", type=int, default=1, help="replications to simulate from a config")
    d.add_argument("--horizon", type=int)
    d.add_argument("--seed", type=int)

    r = sub.add_parser("report", help="summarize a simulate output directory")
    r.add_argument("results_dir")
    r.add_argument("--format", default="csv", choices=("csv", "json"))
    return p


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {}
    for name in ("seed", "replications", "horizon"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return replace(cfg, **kw) if kw else cfg


def cmd_simulate(args) -> int:
    started = _now()
    cfg = _apply_overrides(parse_config(args.config), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    per_rep = run_replications(cfg, workers=args.workers)
    truths = cfg.truths()
    flat = [r for reps in per_rep for r in reps]
    metrics = aggregate(flat, truths)

    paths = {
        "config": out / "config.json",
        "estimates": out / "estimates.csv",
        "results": out / "results.csv",
        "metrics": out / "metrics.json",
        "histogram": out / "histogram.csv",
    }
    write_json(paths["config"], cfg.to_dict())
    write_estimates(paths["estimates"], per_rep)
    write_results(paths["results"], metrics)
    write_json(paths["metrics"], metrics_json(metrics))
    write_histograms(paths["histogram"], histograms(flat, truths))
    n_logs = min(max(args.logs, 0), cfg.replications)
    log_paths = []
    if n_logs:
        (out / "logs").mkdir(exist_ok=True)
        for rep, tr in enumerate(generate(cfg, range(n_logs))):
            p = out / "logs" / f"rep_{rep:05d}.csv"
            write_trajectory(tr, p)
            log_paths.append(str(p))
    manifest = {
        "config_hash": cfg.digest(),
        "tool_version": __version__,
        "base_seed": cfg.seed,
        "started": started,
        "finished": _now(),
        "elapsed_seconds": round(time.perf_counter() - t0, 3),
        "outputs": {k: str(v) for k, v in paths.items()} | {"logs": log_paths},
    }
    write_json(out / "manifest.json", manifest)
    log.info("wrote %s", out)
    return EXIT_OK


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args) -> int:
    reports = evaluate_log(
        args.log, args.weights, args.contrast, alpha=args.alpha,
        mu_clip=args.mu_clip, nh0_mode=args.nh0_mode,
    )
    if args.format == "json":
        text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    else:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ESTIMATE_COLUMNS)
        w.writerows(estimate_rows(0, reports))
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    src = Path(args.source)
    if src.suffix.lower() == ".json":
        cfg = _apply_overrides(parse_config(src), args)
        trajectories = generate(cfg, range(max(args.reps, 1)))
    else:
        if not args.config:
            raise ConfigError(
                "diagnostics need the true delay law; pass --config with the delay spec", "--config"
            )
        cfg = parse_config(args.config)
        trajectories = [read_trajectory(src)]
        if trajectories[0].n_arms != cfg.n_arms:
            raise ConfigError("config and log disagree on the number of arms", "--config")
    reference = trajectories if len(trajectories) > 1 else None
    reports = [condition_diagnostics(tr, cfg.delay, args.delta, reference) for tr in trajectories]
    payload = {"replications": [r.to_dict() for r in reports]}
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    d = Path(args.results_dir)
    cfg = parse_config(d / "config.json")
    rows = read_estimates(d / "estimates.csv")
    metrics = aggregate([r for _, r in rows], cfg.truths())
    if args.format == "json":
        sys.stdout.write(json.dumps(metrics_json(metrics), indent=2, sort_keys=True) + "\n")
    else:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        w.writerows(result_rows(metrics))
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    first = next((a for a in argv if not a.startswith("-")), None)
    if first is None and not any(a in ("-h", "--help", "--version") for a in argv):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if first is not None and first not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"dbi: unknown subcommand {first!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"dbi: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"dbi: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
