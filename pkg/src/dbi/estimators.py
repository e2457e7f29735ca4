"""Delay-adjusted adaptively weighted Hajek AIPW estimation and baselines.

Every estimator is a function of the logged tuple ``(t, A_t, D_t, Y_t,
pi_t, h_t)`` evaluated at the horizon ``T``: an outcome counts as observed
only if ``t + D_t <= T``. Arms are 0-based.

Estimator families:

``DAIPW``
    Hajek-normalized AIPW with arm-wise adaptive weights ``h_t(a)``.
``Mean``
    Sample mean of observed outcomes.
``NH``
    Adaptively weighted AIPW without Hajek normalization.
``NH0``
    Plain IPW without Hajek normalization or outcome model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .env import Trajectory, TrajectoryRecord
from .errors import ConfigError, NoObservationError, PositivityError

ESTIMATORS = ("DAIPW", "Mean", "NH", "NH0")
NH0_MODES = ("paper_text", "adaptive")
DEFAULT_MU_CLIP = 1e6


@dataclass(frozen=True)
class EstimateReport:
    """One estimate for one (estimator, target) pair.

    ``target`` is ``"arm<k>"`` (1-based label) or ``"contrast:<w...>"``.
    Undefined estimates carry ``defined=False`` and ``None`` numbers.
    """

    estimator: str
    target: str
    w: tuple[float, ...]
    qhat: float | None
    vhat: float | None
    ci: tuple[float, float] | None
    phat: float | None = None
    defined: bool = True

    @classmethod
    def undefined(cls, estimator: str, target: str, w) -> "EstimateReport":
        return cls(estimator, target, tuple(w), None, None, None, None, False)

    @property
    def se(self) -> float | None:
        return None if self.vhat is None else math.sqrt(self.vhat)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "target": self.target,
            "w": list(self.w),
            "qhat": self.qhat,
            "phat": self.phat,
            "vhat": self.vhat,
            "ci": None if self.ci is None else list(self.ci),
            "defined": self.defined,
        }


def arm_target(arm: int) -> str:
    return f"arm{arm + 1}"


def contrast_target(w: Sequence[float]) -> str:
    return "contrast:" + ",".join(format(float(x), "g") for x in w)


# --------------------------------------------------------------- ingredients


def gamma(record: TrajectoryRecord, arm: int, horizon: int) -> float:
    """``1{A_t = a, D_t <= T - t} / pi_t(a)``."""
    if record.action != arm or not record.delay <= horizon - record.t:
        return 0.0
    p = float(record.propensities[arm])
    if p <= 0:
        raise PositivityError(f"t={record.t}: observed arm {arm + 1} has propensity {p}")
    return 1.0 / p


def observed_mask(trajectory: Trajectory, arm: int) -> np.ndarray:
    """Pulls of ``arm`` whose outcome arrived by the horizon."""
    return (trajectory.actions == arm) & (trajectory.arrival_times() <= trajectory.horizon)


def gammas(trajectory: Trajectory, arm: int) -> np.ndarray:
    """``gamma_t(arm)`` for every ``t``."""
    obs = observed_mask(trajectory, arm)
    pi = trajectory.propensities[:, arm]
    if np.any(obs & ~(pi > 0)):
        t = int(np.flatnonzero(obs & ~(pi > 0))[0]) + 1
        raise PositivityError(f"t={t}: observed arm {arm + 1} has propensity {pi[t - 1]}")
    out = np.zeros(trajectory.horizon)
    out[obs] = 1.0 / pi[obs]
    return out


def _fsum(x) -> float:
    # Exactly rounded, so dropping zeros and ordering cannot change the result.
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x[x != 0].tolist())


def outcome_model_sequence(
    trajectory: Trajectory, mu_clip: float = DEFAULT_MU_CLIP, fallback: float = 0.0
) -> np.ndarray:
    """``mu_hat[t-1, a]``: clipped mean of arm-``a`` outcomes arrived by ``t - 1``.

    Arrivals are accumulated per arrival time in the order of ``t``, the same
    order the policies see them. Arms with no arrivals get ``fallback``.
    """
    n, k = trajectory.horizon, trajectory.n_arms
    arrival = trajectory.arrival_times()
    due = np.flatnonzero(arrival <= n)
    cnt = np.zeros((n + 1, k), dtype=np.int64)
    tot = np.zeros((n + 1, k))
    at = arrival[due].astype(np.int64)
    np.add.at(cnt, (at, trajectory.actions[due]), 1)
    np.add.at(tot, (at, trajectory.actions[due]), trajectory.outcomes[due])
    # Row t-1 of the shifted cumsums holds arrivals with arrival time <= t-1.
    counts = np.cumsum(cnt, axis=0)[:n]
    sums = np.cumsum(tot, axis=0)[:n]
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    return np.clip(mu, -mu_clip, mu_clip)


# ------------------------------------------------------------------- DAIPW


def p_hat(trajectory: Trajectory, arm: int) -> float:
    """Weighted estimate of ``P_a(D < inf)``; not clamped to [0, 1]."""
    h = trajectory.weights[:, arm]
    h_sum = _fsum(h)
    if not h_sum > 0:
        raise NoObservationError(f"arm {arm + 1}: weights sum to zero")
    return _fsum(h * gammas(trajectory, arm)) / h_sum


def daipw_arm(trajectory: Trajectory, arm: int, mu_hat: np.ndarray | None = None) -> float:
    if mu_hat is None:
        mu_hat = outcome_model_sequence(trajectory)
    h = trajectory.weights[:, arm]
    g = gammas(trajectory, arm)
    m = mu_hat[:, arm]
    hg = _fsum(h * g)
    h_sum = _fsum(h)
    if not (hg > 0 and h_sum > 0):
        raise NoObservationError(f"arm {arm + 1}: no observed outcome carries weight")
    resid = np.where(g > 0, (trajectory.outcomes - m) * g, 0.0)
    return _fsum(h * resid) / hg + _fsum(h * m) / h_sum


def variance_hat(trajectory: Trajectory, arm: int, qhat: float, phat: float) -> float:
    if not phat > 0:
        raise NoObservationError(f"arm {arm + 1}: p_hat is zero")
    h = trajectory.weights[:, arm]
    g = gammas(trajectory, arm)
    resid = np.where(g > 0, (trajectory.outcomes - qhat) * g, 0.0)
    return _fsum((h * resid) ** 2) / (phat * _fsum(h)) ** 2


_NORMAL = NormalDist()


def z_quantile(alpha: float) -> float:
    """Upper ``alpha/2`` standard normal quantile."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha level must lie in (0, 1)", "ci_level")
    return _NORMAL.inv_cdf(1.0 - alpha / 2.0)


def confidence_interval(qhat: float, vhat: float, alpha: float = 0.05) -> tuple[float, float]:
    if vhat < 0:
        raise ValueError("variance must be >= 0")
    half = z_quantile(alpha) * math.sqrt(vhat)
    return (qhat - half, qhat + half)


def _unit(arm: int, k: int) -> tuple[float, ...]:
    return tuple(1.0 if i == arm else 0.0 for i in range(k))


def daipw_report(trajectory, arm, mu_hat=None, alpha=0.05) -> EstimateReport:
    w = _unit(arm, trajectory.n_arms)
    try:
        q = daipw_arm(trajectory, arm, mu_hat)
        p = p_hat(trajectory, arm)
        v = variance_hat(trajectory, arm, q, p)
    except NoObservationError:
        return EstimateReport.undefined("DAIPW", arm_target(arm), w)
    return EstimateReport("DAIPW", arm_target(arm), w, q, v, confidence_interval(q, v, alpha), p)


def contrast(reports: Sequence[EstimateReport], w: Sequence[float], alpha: float = 0.05) -> EstimateReport:
    """Linear combination of per-arm reports, ``reports[a]`` being arm ``a``.

    Arms are treated as asymptotically uncorrelated, so variances add with
    squared coefficients.
    """
    w = tuple(float(x) for x in w)
    if len(w) != len(reports):
        raise ConfigError("contrast length must equal the number of arms", "contrasts")
    family = reports[0].estimator
    for coef, rep in zip(w, reports):
        if coef != 0 and not rep.defined:
            raise NoObservationError(f"contrast touches undefined target {rep.target}")
    used = [(c, r) for c, r in zip(w, reports) if c != 0]
    if len(used) == 1 and used[0][0] == 1.0:
        return used[0][1]
    q = math.fsum(c * r.qhat for c, r in used)
    v = math.fsum(c * c * r.vhat for c, r in used)
    return EstimateReport(family, contrast_target(w), w, q, v, confidence_interval(q, v, alpha))


# ---------------------------------------------------------------- baselines


def baseline_mean(trajectory: Trajectory, arm: int) -> float:
    obs = observed_mask(trajectory, arm)
    if not obs.any():
        raise NoObservationError(f"arm {arm + 1}: no observed outcome")
    return _fsum(trajectory.outcomes[obs]) / int(obs.sum())


def mean_report(trajectory, arm, alpha=0.05) -> EstimateReport:
    w = _unit(arm, trajectory.n_arms)
    try:
        q = baseline_mean(trajectory, arm)
    except NoObservationError:
        return EstimateReport.undefined("Mean", arm_target(arm), w)
    y = trajectory.outcomes[observed_mask(trajectory, arm)]
    n = len(y)
    v = _fsum((y - q) ** 2) / (n - 1) / n if n > 1 else 0.0
    return EstimateReport("Mean", arm_target(arm), w, q, v, confidence_interval(q, v, alpha))


def _nh0_scores(trajectory, arm):
    g = gammas(trajectory, arm)
    return np.where(g > 0, trajectory.outcomes * g, 0.0)


def baseline_nh0(trajectory: Trajectory, arm: int, mode: str = "paper_text") -> float:
    """Non-Hajek IPW.

    ``paper_text``: ``T^-1 sum_t Y_t gamma_t(a)``.
    ``adaptive``: ``sum_t h_t(a) Y_t gamma_t(a) / sum_t h_t(a)``.
    """
    if mode not in NH0_MODES:
        raise ConfigError(f"unknown NH0 mode {mode!r}", "nh0_mode")
    s = _nh0_scores(trajectory, arm)
    if mode == "paper_text":
        return _fsum(s) / trajectory.horizon
    h = trajectory.weights[:, arm]
    return _fsum(h * s) / _fsum(h)


def nh0_report(trajectory, arm, mode="paper_text", alpha=0.05) -> EstimateReport:
    w = _unit(arm, trajectory.n_arms)
    q = baseline_nh0(trajectory, arm, mode)
    s = _nh0_scores(trajectory, arm)
    if mode == "paper_text":
        h = np.ones(trajectory.horizon)
    else:
        h = trajectory.weights[:, arm]
    v = _fsum((h * (s - q)) ** 2) / _fsum(h) ** 2
    return EstimateReport("NH0", arm_target(arm), w, q, v, confidence_interval(q, v, alpha))


def _nh_scores(trajectory, arm, mu_hat):
    g = gammas(trajectory, arm)
    m = mu_hat[:, arm]
    return np.where(g > 0, (trajectory.outcomes - m) * g, 0.0) + m


def baseline_nh(trajectory: Trajectory, arm: int, mu_hat: np.ndarray | None = None) -> float:
    """Adaptively weighted AIPW, no Hajek normalization or censoring adjustment."""
    if mu_hat is None:
        mu_hat = outcome_model_sequence(trajectory)
    h = trajectory.weights[:, arm]
    h_sum = _fsum(h)
    if not h_sum > 0:
        raise NoObservationError(f"arm {arm + 1}: weights sum to zero")
    return _fsum(h * _nh_scores(trajectory, arm, mu_hat)) / h_sum


def nh_report(trajectory, arm, mu_hat=None, alpha=0.05) -> EstimateReport:
    if mu_hat is None:
        mu_hat = outcome_model_sequence(trajectory)
    w = _unit(arm, trajectory.n_arms)
    try:
        q = baseline_nh(trajectory, arm, mu_hat)
    except NoObservationError:
        return EstimateReport.undefined("NH", arm_target(arm), w)
    h = trajectory.weights[:, arm]
    v = _fsum((h * (_nh_scores(trajectory, arm, mu_hat) - q)) ** 2) / _fsum(h) ** 2
    return EstimateReport("NH", arm_target(arm), w, q, v, confidence_interval(q, v, alpha))


# ------------------------------------------------------------------ driver


def evaluate_all(
    trajectory: Trajectory,
    estimators: Iterable[str] = ESTIMATORS,
    contrasts: Sequence[Sequence[float]] = (),
    alpha: float = 0.05,
    mu_clip: float = DEFAULT_MU_CLIP,
    nh0_mode: str = "paper_text",
) -> list[EstimateReport]:
    """All requested estimator families for every arm, then every contrast."""
    k = trajectory.n_arms
    mu_hat = outcome_model_sequence(trajectory, mu_clip)
    out: list[EstimateReport] = []
    for name in estimators:
        if name == "DAIPW":
            per_arm = [daipw_report(trajectory, a, mu_hat, alpha) for a in range(k)]
        elif name == "Mean":
            per_arm = [mean_report(trajectory, a, alpha) for a in range(k)]
        elif name == "NH":
            per_arm = [nh_report(trajectory, a, mu_hat, alpha) for a in range(k)]
        elif name == "NH0":
            per_arm = [nh0_report(trajectory, a, nh0_mode, alpha) for a in range(k)]
        else:
            raise ConfigError(f"unknown estimator {name!r}", "estimators")
        out.extend(per_arm)
        for w in contrasts:
            try:
                out.append(contrast(per_arm, w, alpha))
            except NoObservationError:
                out.append(EstimateReport.undefined(name, contrast_target(w), w))
    return out
