"""File formats: trajectory logs, estimate tables, metrics and histograms.

Trajectory log (CSV)::

    t,action,delay,outcome,pi_1,...,pi_K,h_1,...,h_K

``action`` is the 1-based arm id, ``delay`` a non-negative integer or
``inf``, reals are written with 17 significant digits so that a round trip
is exact.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .env import Trajectory
from .errors import DataError, PositivityError
from .estimators import ESTIMATORS, EstimateReport, evaluate_all
from .weighting import compute_weights

ESTIMATE_COLUMNS = ["rep", "estimator", "target", "qhat", "phat", "vhat", "ci_lo", "ci_hi", "defined"]
RESULT_COLUMNS = [
    "estimator", "target", "truth", "n_defined", "n_total", "bias", "sd",
    "mean_se", "coverage", "ks_statistic", "undefined_rate",
]


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def fmt_delay(d: float) -> str:
    if math.isinf(d):
        return "inf"
    return str(int(d))


def log_header(n_arms: int) -> list[str]:
    return (
        ["t", "action", "delay", "outcome"]
        + [f"pi_{k}" for k in range(1, n_arms + 1)]
        + [f"h_{k}" for k in range(1, n_arms + 1)]
    )


def write_trajectory(trajectory: Trajectory, path) -> None:
    k = trajectory.n_arms
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(log_header(k))
        for i in range(trajectory.horizon):
            w.writerow(
                [i + 1, int(trajectory.actions[i]) + 1, fmt_delay(trajectory.delays[i]),
                 fmt_real(trajectory.outcomes[i])]
                + [fmt_real(x) for x in trajectory.propensities[i]]
                + [fmt_real(x) for x in trajectory.weights[i]]
            )


def _parse_real(s: str, line: int, col: str) -> float:
    try:
        x = float(s)
    except ValueError:
        raise DataError(f"line {line}: {col}: not a number: {s!r}") from None
    if not math.isfinite(x):
        raise DataError(f"line {line}: {col}: must be finite")
    return x


def _parse_delay(s: str, line: int) -> float:
    if s.strip() == "inf":
        return math.inf
    try:
        d = int(s)
    except ValueError:
        raise DataError(f"line {line}: delay: expected an integer or 'inf', got {s!r}") from None
    if d < 0:
        raise DataError(f"line {line}: delay: must be >= 0")
    return float(d)


def read_trajectory(path) -> Trajectory:
    """Parse a trajectory log; malformed rows raise :class:`DataError` with the line number."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read log: {exc}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError("empty log")
    header = [c.strip() for c in rows[0]]
    if len(header) < 6 or header[:4] != ["t", "action", "delay", "outcome"] or (len(header) - 4) % 2:
        raise DataError("line 1: bad header")
    k = (len(header) - 4) // 2
    if header != log_header(k):
        raise DataError("line 1: bad header")
    body = rows[1:]
    if not body:
        raise DataError("log has no records")
    n = len(body)
    actions = np.empty(n, dtype=np.int64)
    delays = np.empty(n)
    outcomes = np.empty(n)
    pis = np.empty((n, k))
    hs = np.empty((n, k))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
            a = int(row[1])
        except ValueError:
            raise DataError(f"line {line}: t and action must be integers") from None
        if t != i + 1:
            raise DataError(f"line {line}: expected t={i + 1}, got {t}")
        if not 1 <= a <= k:
            raise DataError(f"line {line}: action {a} outside 1..{k}")
        actions[i] = a - 1
        delays[i] = _parse_delay(row[2], line)
        outcomes[i] = _parse_real(row[3], line, "outcome")
        pis[i] = [_parse_real(x, line, header[4 + j]) for j, x in enumerate(row[4:4 + k])]
        hs[i] = [_parse_real(x, line, header[4 + k + j]) for j, x in enumerate(row[4 + k:])]
        if pis[i, a - 1] <= 0:
            raise PositivityError(f"line {line}: played arm {a} has propensity {pis[i, a - 1]}")
        if np.any(pis[i] < 0) or np.any(hs[i] < 0):
            raise DataError(f"line {line}: negative propensity or weight")
        if abs(math.fsum(pis[i]) - 1.0) > 1e-9:
            raise DataError(f"line {line}: propensities do not sum to 1")
    return Trajectory(actions, delays, outcomes, pis, hs)


def evaluate_log(
    log_path,
    weight_scheme: str = "logged",
    contrasts: Sequence[Sequence[float]] = (),
    estimators: Iterable[str] = ESTIMATORS,
    alpha: float = 0.05,
    mu_clip: float = 1e6,
    nh0_mode: str = "paper_text",
) -> list[EstimateReport]:
    """Recompute every estimator from a log alone.

    ``weight_scheme="logged"`` uses the ``h_k`` columns; a scheme name
    recomputes weights from the logged propensities.
    """
    tr = read_trajectory(log_path)
    if weight_scheme != "logged":
        tr.weights = compute_weights(tr.propensities, weight_scheme)
    return evaluate_all(tr, estimators, contrasts, alpha, mu_clip, nh0_mode)


# -------------------------------------------------------------- result files


def _opt(x) -> str:
    return "" if x is None else fmt_real(x)


def estimate_rows(rep: int, reports: Iterable[EstimateReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        lo, hi = r.ci if r.ci else (None, None)
        rows.append([str(rep), r.estimator, r.target, _opt(r.qhat), _opt(r.phat),
                     _opt(r.vhat), _opt(lo), _opt(hi), "1" if r.defined else "0"])
    return rows


def write_estimates(path, per_rep: Sequence[Sequence[EstimateReport]], reps: Sequence[int] | None = None) -> None:
    reps = list(range(len(per_rep))) if reps is None else list(reps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ESTIMATE_COLUMNS)
        for rep, reports in zip(reps, per_rep):
            w.writerows(estimate_rows(rep, reports))


def read_estimates(path) -> list[tuple[int, EstimateReport]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read estimates: {exc}") from None
    out = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ESTIMATE_COLUMNS:
            raise DataError(f"{path}: bad header")
        for i, row in enumerate(reader):
            line = i + 2

            def num(key):
                return None if row[key] == "" else _parse_real(row[key], line, key)

            defined = row["defined"] == "1"
            lo, hi = num("ci_lo"), num("ci_hi")
            out.append((int(row["rep"]), EstimateReport(
                estimator=row["estimator"], target=row["target"], w=(),
                qhat=num("qhat"), vhat=num("vhat"),
                ci=None if lo is None else (lo, hi), phat=num("phat"), defined=defined,
            )))
    return out


def result_rows(metrics: dict) -> list[list]:
    """One row per (estimator, target), reals in shortest round-trip form."""
    rows = []
    for key in sorted(metrics):
        d = metrics[key].to_dict()
        rows.append([d[c] if isinstance(d[c], (str, int)) else repr(float(d[c])) for c in RESULT_COLUMNS])
    return rows


def write_results(path, metrics: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        w.writerows(result_rows(metrics))


def metrics_json(metrics: dict) -> dict:
    out: dict = {}
    for (est, target), m in sorted(metrics.items()):
        out.setdefault(est, {})[target] = {k: v for k, v in m.to_dict().items() if k not in ("estimator", "target")}
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_histograms(path, hists: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "target", "bin_lo", "bin_hi", "count"])
        for (est, target) in sorted(hists):
            counts, edges = hists[(est, target)]
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([est, target, fmt_real(lo), fmt_real(hi), int(c)])
