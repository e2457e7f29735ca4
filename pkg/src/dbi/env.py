"""Bandit environment with arm-dependent delayed and censored feedback.

Each step draws an action from the current propensities, a delay from the
played arm's delay law (``inf`` means the outcome never arrives) and the full
vector of potential outcomes; the observed outcome is the played arm's entry.
What a policy may see at time ``t`` is decided by the arrival calendar
``t' + D_t' <= t - 1``, never by dropping data.

Arms are 0-based indices throughout the Python API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError

NB_TABLE_CAP = 10**7
NB_TAIL_TOL = 1e-12

# Stream tags for the per-replication sub-streams.
OUTCOME_STREAM = 0
ACTION_STREAM = 1
DELAY_STREAM = 2


# ---------------------------------------------------------------- outcomes


@dataclass(frozen=True)
class OutcomeSpec:
    means: tuple[float, ...]
    sds: tuple[float, ...]
    family: str = "normal"

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "sds", tuple(float(s) for s in self.sds))
        if self.family not in ("normal", "bernoulli"):
            raise ConfigError(f"unknown outcome family {self.family!r}", "outcome.family")
        if len(self.means) != len(self.sds):
            raise ConfigError("means and sds differ in length", "outcome")
        if any(s < 0 or not math.isfinite(s) for s in self.sds):
            raise ConfigError("standard deviations must be finite and >= 0", "outcome.sds")
        if any(not math.isfinite(m) for m in self.means):
            raise ConfigError("means must be finite", "outcome.means")
        if self.family == "bernoulli":
            if any(not 0.0 <= m <= 1.0 for m in self.means):
                raise ConfigError("bernoulli means must lie in [0, 1]", "outcome.means")
            object.__setattr__(
                self, "sds", tuple(math.sqrt(m * (1.0 - m)) for m in self.means)
            )

    @property
    def n_arms(self) -> int:
        return len(self.means)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Potential-outcome vectors for ``n`` consecutive steps, shape (n, K)."""
        k = self.n_arms
        if self.family == "normal":
            z = rng.standard_normal((n, k))
            return np.asarray(self.means) + np.asarray(self.sds) * z
        u = rng.random((n, k))
        return (u < np.asarray(self.means)).astype(float)


# ------------------------------------------------------------------ delays


@dataclass(frozen=True)
class ZeroDelay:
    """Point mass at zero."""

    kind = "zero"

    def quantile(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def cdf(self, m):
        return np.where(np.asarray(m) >= 0, 1.0, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class NegativeBinomialDelay:
    """Number of failures before the ``r``-th success, success probability ``p``."""

    r: float = 2.0
    p: float = 0.5
    kind = "negative_binomial"

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ConfigError("negative_binomial r must be > 0", "delay.finite.r")
        if not 0.0 < self.p < 1.0:
            raise ConfigError("negative_binomial p must lie in (0, 1)", "delay.finite.p")

    @cached_property
    def _cdf_table(self) -> np.ndarray:
        # Term-by-term accumulation; stops once the remaining tail is < 1e-12.
        q = 1.0 - self.p
        pmf = self.p**self.r
        total = pmf
        cdf = [total]
        k = 0
        while 1.0 - total >= NB_TAIL_TOL and k < NB_TABLE_CAP:
            pmf *= (k + self.r) / (k + 1) * q
            k += 1
            total += pmf
            cdf.append(total)
            if pmf == 0.0 and k > self.r / self.p:
                break
        return np.asarray(cdf)

    def quantile(self, u):
        table = self._cdf_table
        return np.searchsorted(table, np.asarray(u, dtype=float), side="left").astype(float)

    def cdf(self, m):
        table = self._cdf_table
        m = np.asarray(m)
        idx = np.clip(m, 0, len(table) - 1).astype(np.int64)
        out = np.where(m >= len(table), 1.0, table[idx])
        return np.where(m < 0, 0.0, out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r, "p": self.p}


@dataclass(frozen=True)
class RoundedParetoDelay:
    """``D = floor(X - scale)`` for ``X ~ Pareto(scale, shape)``; puts mass on zero."""

    shape: float = 0.7
    scale: float = 1.0
    kind = "rounded_pareto"

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ConfigError("rounded_pareto shape must be > 0", "delay.finite.shape")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError("rounded_pareto scale must be > 0", "delay.finite.scale")

    def quantile(self, u):
        # u in [0, 1); 1 - u in (0, 1] keeps the power finite.
        v = 1.0 - np.asarray(u, dtype=float)
        x = self.scale * v ** (-1.0 / self.shape)
        return np.floor(x - self.scale)

    def cdf(self, m):
        m = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 1.0 - (self.scale / (self.scale + np.maximum(m, 0.0) + 1.0)) ** self.shape
        return np.where(m < 0, 0.0, out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


FiniteDelay = ZeroDelay | NegativeBinomialDelay | RoundedParetoDelay


def finite_delay_from_dict(d: dict, path: str = "delay.finite") -> FiniteDelay:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("expected an object with a 'kind' field", path)
    kind = d["kind"]
    params = {k: v for k, v in d.items() if k != "kind"}
    classes = {
        "zero": (ZeroDelay, set()),
        "negative_binomial": (NegativeBinomialDelay, {"r", "p"}),
        "rounded_pareto": (RoundedParetoDelay, {"shape", "scale"}),
    }
    if kind not in classes:
        raise ConfigError(f"unknown delay kind {kind!r}", f"{path}.kind")
    cls, allowed = classes[kind]
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", path)
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("expected a number", f"{path}.{k}")
    try:
        return cls(**{k: float(v) for k, v in params.items()})
    except ConfigError as exc:
        param = (exc.field or "").rsplit(".", 1)[-1]
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{param}" if param else path) from None


@dataclass(frozen=True)
class DelaySpec:
    """Per-arm delay law: censoring mass at infinity plus a finite component."""

    censor_prob: tuple[float, ...]
    finite: tuple[FiniteDelay, ...]

    def __post_init__(self):
        object.__setattr__(self, "censor_prob", tuple(float(c) for c in self.censor_prob))
        object.__setattr__(self, "finite", tuple(self.finite))
        if len(self.censor_prob) != len(self.finite):
            raise ConfigError("censor_prob and finite differ in length", "delay")
        for c in self.censor_prob:
            if not 0.0 <= c <= 1.0:
                raise ConfigError("censor_prob must lie in [0, 1]", "delay.censor_prob")
        for f in self.finite:
            if not isinstance(f, (ZeroDelay, NegativeBinomialDelay, RoundedParetoDelay)):
                raise ConfigError(f"unsupported finite delay {f!r}", "delay.finite")

    @classmethod
    def uniform(cls, n_arms: int, censor_prob=0.0, finite: FiniteDelay | None = None):
        cp = censor_prob if np.ndim(censor_prob) else [censor_prob] * n_arms
        return cls(tuple(cp), tuple([finite or ZeroDelay()] * n_arms))

    @property
    def n_arms(self) -> int:
        return len(self.censor_prob)

    def from_uniforms(self, arm: int, u_censor, u_finite):
        """Delay given the two uniforms a draw consumes."""
        d = self.finite[arm].quantile(u_finite)
        return np.where(np.asarray(u_censor) < self.censor_prob[arm], np.inf, d)

    def prob_arrived_within(self, arm: int, m) -> np.ndarray:
        """``P_a(D <= m)`` for integer lags ``m``."""
        return (1.0 - self.censor_prob[arm]) * self.finite[arm].cdf(m)

    def prob_finite_beyond(self, arm: int, m) -> np.ndarray:
        """``P_a(m < D < inf)``."""
        return (1.0 - self.censor_prob[arm]) * (1.0 - self.finite[arm].cdf(m))

    def prob_finite(self, arm: int) -> float:
        return 1.0 - self.censor_prob[arm]

    def to_dict(self) -> dict:
        return {
            "censor_prob": list(self.censor_prob),
            "finite": [f.to_dict() for f in self.finite],
        }


def sample_delay(rng: np.random.Generator, spec: DelaySpec, arm: int) -> float:
    """One delay draw for ``arm``; consumes exactly two uniforms from ``rng``."""
    u_censor = rng.random()
    u_finite = rng.random()
    return float(spec.from_uniforms(arm, u_censor, u_finite))


def sample_delays(rng: np.random.Generator, spec: DelaySpec, arm: int, size: int) -> np.ndarray:
    """``size`` independent draws; same stream consumption as repeated ``sample_delay``."""
    u = rng.random((size, 2))
    return spec.from_uniforms(arm, u[:, 0], u[:, 1])


# ------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    action: int
    delay: float
    outcome: float
    propensities: np.ndarray
    weights: np.ndarray
    potential: np.ndarray | None = field(default=None, compare=False)


@dataclass
class Trajectory:
    """Column-oriented trajectory; row ``i`` is time ``t = i + 1``."""

    actions: np.ndarray
    delays: np.ndarray
    outcomes: np.ndarray
    propensities: np.ndarray
    weights: np.ndarray
    potential: np.ndarray | None = None

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.delays = np.asarray(self.delays, dtype=float)
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        self.propensities = np.asarray(self.propensities, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        n = len(self.actions)
        if not (len(self.delays) == len(self.outcomes) == n):
            raise ValueError("column lengths differ")
        if self.propensities.shape != (n, self.propensities.shape[-1]) or self.weights.shape != self.propensities.shape:
            raise ValueError("propensities and weights must be (T, K)")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def n_arms(self) -> int:
        return self.propensities.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def __len__(self) -> int:
        return self.horizon

    def record(self, t: int) -> TrajectoryRecord:
        i = t - 1
        return TrajectoryRecord(
            t=t,
            action=int(self.actions[i]),
            delay=float(self.delays[i]),
            outcome=float(self.outcomes[i]),
            propensities=self.propensities[i],
            weights=self.weights[i],
            potential=None if self.potential is None else self.potential[i],
        )

    @property
    def records(self) -> Iterator[TrajectoryRecord]:
        return (self.record(t) for t in range(1, self.horizon + 1))

    @classmethod
    def from_records(cls, records: Sequence[TrajectoryRecord]) -> "Trajectory":
        records = sorted(records, key=lambda r: r.t)
        if [r.t for r in records] != list(range(1, len(records) + 1)):
            raise ValueError("records must cover t = 1..T without gaps")
        potential = None
        if records and all(r.potential is not None for r in records):
            potential = np.array([r.potential for r in records])
        return cls(
            actions=[r.action for r in records],
            delays=[r.delay for r in records],
            outcomes=[r.outcome for r in records],
            propensities=np.array([r.propensities for r in records]),
            weights=np.array([r.weights for r in records]),
            potential=potential,
        )

    def arrival_times(self) -> np.ndarray:
        return self.times + self.delays


def arrival_mask(trajectory: Trajectory, t_cut: int) -> np.ndarray:
    return trajectory.arrival_times() <= t_cut


def arrivals_up_to(trajectory: Trajectory, t_cut: int) -> set[int]:
    """Times ``t'`` whose outcome is visible by ``t_cut`` (``t' + D_t' <= t_cut``)."""
    if not 0 <= t_cut <= trajectory.horizon:
        raise ValueError(f"t_cut must lie in [0, {trajectory.horizon}]")
    return {int(t) for t in trajectory.times[arrival_mask(trajectory, t_cut)]}


# --------------------------------------------------------------- simulation


class Streams(NamedTuple):
    outcome: np.random.Generator
    action: np.random.Generator
    delay: np.random.Generator


def make_streams(seed: int, rep: int) -> Streams:
    """Independent counter-based sub-streams keyed by (seed, replication, tag)."""

    def gen(tag: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), tag))
        return np.random.Generator(np.random.Philox(ss))

    return Streams(gen(OUTCOME_STREAM), gen(ACTION_STREAM), gen(DELAY_STREAM))


def choose_action(pi: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF draw of an arm from propensities ``pi`` (shape (..., K))."""
    cum = np.cumsum(pi, axis=-1)
    a = np.sum(np.asarray(u)[..., None] >= cum, axis=-1)
    k = pi.shape[-1]
    over = a >= k
    if np.any(over):
        # Round-off left cum[-1] < 1: fall back to the last arm with mass.
        last = k - 1 - np.argmax((pi > 0)[..., ::-1], axis=-1)
        a = np.where(over, last, a)
    return a


def _check_components(outcome: OutcomeSpec, delay: DelaySpec, policy) -> None:
    if outcome.n_arms != delay.n_arms:
        raise ConfigError("outcome and delay specs disagree on the number of arms")
    if outcome.n_arms < 2:
        raise ConfigError("at least two arms are required", "arms")
    if policy.kind == "thompson_clipped":
        if outcome.family != "bernoulli":
            raise ConfigError("thompson_clipped requires bernoulli outcomes", "policy.kind")
        if outcome.n_arms != 2:
            raise ConfigError("thompson_clipped supports exactly two arms", "policy.kind")


def step(
    streams: Streams,
    t: int,
    state,
    outcome: OutcomeSpec,
    delay: DelaySpec,
    policy,
    weight_scheme: str,
) -> TrajectoryRecord:
    """Generate the record for time ``t`` given arrivals folded into ``state``."""
    from .policies import propensities
    from .weighting import compute_weights

    pi = propensities(state, t, policy)
    a = int(choose_action(pi, streams.action.random()))
    d = sample_delay(streams.delay, delay, a)
    y = outcome.draw(streams.outcome, 1)[0]
    h = compute_weights(pi, weight_scheme)
    return TrajectoryRecord(t, a, d, float(y[a]), pi, h, potential=y)


def simulate_sequential(
    outcome: OutcomeSpec,
    delay: DelaySpec,
    policy,
    weight_scheme: str,
    horizon: int,
    seed: int,
    rep: int = 0,
) -> Trajectory:
    """Reference generator: one ``step`` per time with explicit arrival delivery."""
    from .policies import PolicyState, update_on_arrivals

    _check_components(outcome, delay, policy)
    streams = make_streams(seed, rep)
    state = PolicyState.initial(outcome.n_arms, policy)
    pending: dict[int, list[TrajectoryRecord]] = {}
    records = []
    for t in range(1, horizon + 1):
        update_on_arrivals(state, pending.pop(t - 1, []))
        rec = step(streams, t, state, outcome, delay, policy, weight_scheme)
        records.append(rec)
        arrival = t + rec.delay
        if arrival <= horizon:
            pending.setdefault(int(arrival), []).append(rec)
    return Trajectory.from_records(records)


def simulate_batch(
    outcome: OutcomeSpec,
    delay: DelaySpec,
    policy,
    weight_scheme: str,
    horizon: int,
    seed: int,
    reps: Sequence[int],
) -> list[Trajectory]:
    """Generate several replications at once, vectorized over replications.

    Each replication draws from its own sub-streams, so a trajectory does not
    depend on which other replications share the batch. The result matches
    ``simulate_sequential`` bit-for-bit.
    """
    from .policies import PolicyState, propensities
    from .weighting import compute_weights

    _check_components(outcome, delay, policy)
    reps = list(reps)
    b, k, n = len(reps), outcome.n_arms, horizon
    u_act = np.empty((b, n))
    y_all = np.empty((b, n, k))
    d_all = np.empty((b, n, k))
    for i, rep in enumerate(reps):
        s = make_streams(seed, rep)
        u_act[i] = s.action.random(n)
        y_all[i] = outcome.draw(s.outcome, n)
        u = s.delay.random((n, 2))
        for arm in range(k):
            d_all[i, :, arm] = delay.from_uniforms(arm, u[:, 0], u[:, 1])

    state = PolicyState.initial(k, policy, batch=b)
    cnt_bucket = np.zeros((n + 1, b, k), dtype=np.int64)
    sum_bucket = np.zeros((n + 1, b, k))
    actions = np.empty((b, n), dtype=np.int64)
    pis = np.empty((b, n, k))
    rows = np.arange(b)
    for t in range(1, n + 1):
        if t >= 2:
            state.counts += cnt_bucket[t - 1]
            state.sums += sum_bucket[t - 1]
        pi = propensities(state, t, policy)
        a = choose_action(pi, u_act[:, t - 1])
        actions[:, t - 1] = a
        pis[:, t - 1] = pi
        d = d_all[rows, t - 1, a]
        arrival = t + d
        due = arrival <= n
        if np.any(due):
            r, at = rows[due], arrival[due].astype(np.int64)
            cnt_bucket[at, r, a[due]] += 1
            sum_bucket[at, r, a[due]] += y_all[r, t - 1, a[due]]

    weights = compute_weights(pis, weight_scheme)
    out = []
    for i in range(b):
        idx = np.arange(n)
        a = actions[i]
        out.append(
            Trajectory(
                actions=a,
                delays=d_all[i, idx, a],
                outcomes=y_all[i, idx, a],
                propensities=pis[i],
                weights=weights[i],
                potential=y_all[i],
            )
        )
    return out


def simulate(outcome, delay, policy, weight_scheme, horizon, seed, rep=0) -> Trajectory:
    return simulate_batch(outcome, delay, policy, weight_scheme, horizon, seed, [rep])[0]
