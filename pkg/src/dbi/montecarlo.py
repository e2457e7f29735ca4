"""Replication harness and aggregate metrics.

Replications are generated in vectorized batches; each replication draws
from its own sub-streams so results do not depend on batching or on the
number of worker processes.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .config import ExperimentConfig
from .env import Trajectory, simulate_batch
from .estimators import EstimateReport, evaluate_all

log = logging.getLogger(__name__)

BATCH_SIZE = 250
HIST_BINS = 50
HIST_RANGE = (-4.0, 4.0)


def generate(config: ExperimentConfig, reps: Sequence[int]) -> list[Trajectory]:
    return simulate_batch(
        config.outcome, config.delay, config.policy, config.weights,
        config.horizon, config.seed, reps,
    )


def evaluate(config: ExperimentConfig, trajectory: Trajectory) -> list[EstimateReport]:
    return evaluate_all(
        trajectory,
        estimators=config.estimators,
        contrasts=config.contrasts,
        alpha=config.ci_level,
        mu_clip=config.mu_clip,
        nh0_mode=config.nh0_mode,
    )


def run_replication(config: ExperimentConfig, rep_index: int) -> list[EstimateReport]:
    return evaluate(config, generate(config, [rep_index])[0])


def _run_chunk(args) -> list[list[EstimateReport]]:
    config, reps = args
    return [evaluate(config, tr) for tr in generate(config, reps)]


def worker_count() -> int:
    n = os.cpu_count() or 1
    cap = os.environ.get("DBI_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def run_replications(
    config: ExperimentConfig,
    reps: Iterable[int] | None = None,
    workers: int | None = None,
    batch_size: int = BATCH_SIZE,
) -> list[list[EstimateReport]]:
    """Estimate reports for each replication, in the order of ``reps``."""
    reps = list(range(config.replications) if reps is None else reps)
    chunks = [(config, reps[i:i + batch_size]) for i in range(0, len(reps), batch_size)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(chunks) <= 1:
        results = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, chunks))
    out = [r for chunk in results for r in chunk]
    log.info("ran %d replications (T=%d)", len(out), config.horizon)
    return out


# --------------------------------------------------------------- aggregation


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class AggregateMetrics:
    estimator: str
    target: str
    truth: float
    n_defined: int
    n_total: int
    bias: float
    sd: float
    mean_se: float
    coverage: float
    ks_statistic: float
    undefined_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mean(x: Sequence[float]) -> float:
    return math.fsum(x) / len(x)


def standardized_errors(reports: Sequence[EstimateReport], truth: float) -> np.ndarray:
    z = []
    for r in reports:
        err = r.qhat - truth
        se = math.sqrt(r.vhat)
        if se > 0:
            z.append(err / se)
        else:
            z.append(0.0 if err == 0 else math.copysign(math.inf, err))
    return np.asarray(z)


def ks_statistic(z: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between the sample and N(0, 1)."""
    z = np.sort(np.asarray(z, dtype=float))
    n = len(z)
    cdf = special.ndtr(z)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def aggregate(
    reports: Iterable[EstimateReport], truths: dict[str, float]
) -> dict[tuple[str, str], AggregateMetrics]:
    """Bias, SD, mean SE, coverage, KS and undefined rate per (estimator, target).

    Undefined reports are excluded from every metric and counted instead.
    Sums use exactly rounded summation, so replication order does not matter.
    """
    groups: dict[tuple[str, str], list[EstimateReport]] = {}
    for r in reports:
        groups.setdefault((r.estimator, r.target), []).append(r)
    out = {}
    for key, group in groups.items():
        est, target = key
        if target not in truths:
            continue
        truth = truths[target]
        ok = [r for r in group if r.defined]
        if not ok:
            raise AggregationError(f"{est}/{target}: no defined reports")
        q = [r.qhat for r in ok]
        n = len(q)
        mean_q = _mean(q)
        sd = math.sqrt(math.fsum((x - mean_q) ** 2 for x in q) / (n - 1)) if n > 1 else 0.0
        covered = sum(1 for r in ok if r.ci[0] <= truth <= r.ci[1])
        out[key] = AggregateMetrics(
            estimator=est,
            target=target,
            truth=truth,
            n_defined=n,
            n_total=len(group),
            bias=mean_q - truth,
            sd=sd,
            mean_se=_mean([math.sqrt(r.vhat) for r in ok]),
            coverage=covered / n,
            ks_statistic=ks_statistic(standardized_errors(ok, truth)),
            undefined_rate=(len(group) - n) / len(group),
        )
    return out


def histograms(
    reports: Iterable[EstimateReport], truths: dict[str, float]
) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
    """Standardized-error histograms (50 bins on [-4, 4]); values outside are dropped."""
    groups: dict[tuple[str, str], list[EstimateReport]] = {}
    for r in reports:
        if r.defined and r.target in truths:
            groups.setdefault((r.estimator, r.target), []).append(r)
    out = {}
    for key, group in groups.items():
        z = standardized_errors(group, truths[key[1]])
        counts, edges = np.histogram(z[np.isfinite(z)], bins=HIST_BINS, range=HIST_RANGE)
        out[key] = (counts, edges)
    return out


def run_experiment(config: ExperimentConfig, workers: int | None = None):
    """Run all replications; returns ``(per-rep reports, metrics)``."""
    per_rep = run_replications(config, workers=workers)
    flat = [r for reps in per_rep for r in reps]
    return per_rep, aggregate(flat, config.truths())
