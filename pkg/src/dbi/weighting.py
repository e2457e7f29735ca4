"""Adaptive weights and plug-in diagnostics for the weighting conditions.

The five diagnostics are finite-sample plug-ins of asymptotic conditions, so
they are meant to be read as trends over a grid of horizons:

* ``a1``: largest single weight relative to the total weight.
* ``a2``: weight placed on outcomes still in flight at the horizon, relative
  to the root of the effective observed information.
* ``a3``: effective information over squared total weight.
* ``a4``: Lyapunov ratio with exponent ``2 + delta``.
* ``a5``: realized information over its expectation (exactly 1 for
  ``h = sqrt(pi)``).

Delay probabilities come from the true delay law, so these are only
available for simulated data.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .env import DelaySpec, Trajectory
from .errors import ConfigError

SQRT_PROPENSITY = "sqrt_propensity"
CONSTANT_ONE = "constant_one"
WEIGHT_SCHEMES = (SQRT_PROPENSITY, CONSTANT_ONE)


def check_scheme(scheme: str) -> str:
    if scheme not in WEIGHT_SCHEMES:
        raise ConfigError(f"unknown weight scheme {scheme!r}", "weights")
    return scheme


def compute_weights(propensities: np.ndarray, scheme: str) -> np.ndarray:
    check_scheme(scheme)
    pi = np.asarray(propensities, dtype=float)
    if scheme == SQRT_PROPENSITY:
        return np.sqrt(pi)
    return np.ones_like(pi)


@dataclass(frozen=True)
class ConditionReport:
    """Per-arm diagnostic values; each field is a tuple indexed by arm."""

    horizon: int
    delta: float
    a1: tuple[float, ...]
    a2: tuple[float, ...]
    a3: tuple[float, ...]
    a4: tuple[float, ...]
    a5: tuple[float, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        arms = {}
        for arm in range(len(self.a1)):
            arms[f"arm{arm + 1}"] = {c: d[c][arm] for c in ("a1", "a2", "a3", "a4", "a5")}
        return {"horizon": self.horizon, "delta": self.delta, "arms": arms}


def _info_ratio(h: np.ndarray, pi: np.ndarray) -> np.ndarray:
    # h^2 / pi, taken as exactly 1 wherever h is bit-identical to sqrt(pi).
    with np.errstate(divide="ignore", invalid="ignore"):
        r = h * h / pi
    return np.where(h == np.sqrt(pi), 1.0, r)


def condition_diagnostics(
    trajectory: Trajectory,
    delay: DelaySpec,
    delta: float = 0.2,
    reference: Sequence[Trajectory] | None = None,
) -> ConditionReport:
    """Evaluate the five weighting diagnostics on one trajectory.

    ``reference`` is an optional set of replications with the same horizon;
    when given, the expectation in ``a5`` is their per-time average of
    ``h^2 / pi``, otherwise the trajectory itself (giving 1).
    """
    if not delta > 0:
        raise ConfigError("delta must be > 0", "delta")
    if delay.n_arms != trajectory.n_arms:
        raise ConfigError("delay spec and trajectory disagree on the number of arms")
    n = trajectory.horizon
    lag = n - trajectory.times  # T - t
    out = {c: [] for c in ("a1", "a2", "a3", "a4", "a5")}
    for arm in range(trajectory.n_arms):
        h = trajectory.weights[:, arm]
        pi = trajectory.propensities[:, arm]
        arrived = delay.prob_arrived_within(arm, lag)
        in_flight = delay.prob_finite_beyond(arm, lag)
        r = _info_ratio(h, pi)
        info = math.fsum(r * arrived)
        h_sum = math.fsum(h)
        out["a1"].append(float(h.max() / h_sum))
        out["a2"].append(math.fsum(h * in_flight) / math.sqrt(info) if info > 0 else math.inf)
        out["a3"].append(info / h_sum**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            lyap_terms = np.where(h > 0, h ** (2 + delta) * pi ** -(1 + delta), 0.0)
        lyap = math.fsum(lyap_terms * arrived)
        out["a4"].append(lyap / info ** ((2 + delta) / 2) if info > 0 else math.inf)
        if reference:
            r_ref = np.mean(
                [_info_ratio(tr.weights[:, arm], tr.propensities[:, arm]) for tr in reference], axis=0
            )
            if len(r_ref) != n:
                raise ValueError("reference trajectories must share the horizon")
            expected = math.fsum(r_ref * arrived)
        else:
            expected = info
        out["a5"].append(info / expected if expected > 0 else math.inf)
    return ConditionReport(n, delta, **{c: tuple(v) for c, v in out.items()})
