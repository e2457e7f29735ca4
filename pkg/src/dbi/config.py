"""Experiment configuration and its JSON schema.

Configs are strict: unknown keys are rejected with the offending field path.
Minimal example::

    {
      "schema_version": 1,
      "outcome": {"means": [1.0, 0.5], "sds": [1.0, 1.0]},
      "delay": {"censor_prob": [0.5, 0.0]},
      "policy": {"kind": "egreedy", "alpha": 0.3}
    }
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .env import DelaySpec, OutcomeSpec, ZeroDelay, finite_delay_from_dict
from .errors import ConfigError
from .estimators import DEFAULT_MU_CLIP, ESTIMATORS, NH0_MODES
from .policies import POLICY_KINDS, PolicyConfig
from .weighting import SQRT_PROPENSITY, check_scheme

SCHEMA_VERSION = 1
DEFAULT_HORIZON = 5000
DEFAULT_REPLICATIONS = 2000
DEFAULT_SEED = 20230601


@dataclass(frozen=True)
class ExperimentConfig:
    outcome: OutcomeSpec
    delay: DelaySpec
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    weights: str = SQRT_PROPENSITY
    horizon: int = DEFAULT_HORIZON
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    contrasts: tuple[tuple[float, ...], ...] = ()
    ci_level: float = 0.05
    estimators: tuple[str, ...] = ESTIMATORS
    nh0_mode: str = "paper_text"
    mu_clip: float = DEFAULT_MU_CLIP

    def __post_init__(self):
        k = self.outcome.n_arms
        if k < 2:
            raise ConfigError("at least two arms are required", "outcome.means")
        if self.delay.n_arms != k:
            raise ConfigError(f"expected {k} arms", "delay.censor_prob")
        check_scheme(self.weights)
        if self.horizon < 1:
            raise ConfigError("must be >= 1", "horizon")
        if self.replications < 1:
            raise ConfigError("must be >= 1", "replications")
        object.__setattr__(self, "contrasts", tuple(tuple(float(x) for x in w) for w in self.contrasts))
        for i, w in enumerate(self.contrasts):
            if len(w) != k:
                raise ConfigError(f"expected {k} coefficients", f"contrasts[{i}]")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("must lie in (0, 1)", "ci_level")
        for i, name in enumerate(self.estimators):
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}", f"estimators[{i}]")
        if self.nh0_mode not in NH0_MODES:
            raise ConfigError(f"unknown mode {self.nh0_mode!r}", "nh0_mode")
        if not self.mu_clip > 0:
            raise ConfigError("must be > 0", "mu_clip")
        if self.policy.kind == "thompson_clipped":
            if self.outcome.family != "bernoulli":
                raise ConfigError("thompson_clipped requires bernoulli outcomes", "policy.kind")
            if k != 2:
                raise ConfigError("thompson_clipped supports exactly two arms", "policy.kind")
            self.policy.priors(k)

    @property
    def n_arms(self) -> int:
        return self.outcome.n_arms

    def truths(self) -> dict[str, float]:
        """True value of every arm and contrast target."""
        from .estimators import arm_target, contrast_target

        q = self.outcome.means
        out = {arm_target(a): q[a] for a in range(self.n_arms)}
        for w in self.contrasts:
            out[contrast_target(w)] = math.fsum(c * m for c, m in zip(w, q))
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "outcome": {
                "family": self.outcome.family,
                "means": list(self.outcome.means),
                "sds": list(self.outcome.sds),
            },
            "delay": self.delay.to_dict(),
            "policy": self.policy.to_dict(),
            "weights": self.weights,
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "contrasts": [list(w) for w in self.contrasts],
            "ci_level": self.ci_level,
            "estimators": list(self.estimators),
            "nh0_mode": self.nh0_mode,
            "mu_clip": self.mu_clip,
        }

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


# ------------------------------------------------------------------ parsing

_TOP_KEYS = {
    "schema_version", "arms", "outcome", "delay", "policy", "weights", "horizon",
    "replications", "seed", "contrasts", "ci_level", "estimators", "nh0_mode", "mu_clip",
}


def _reject_unknown(d: dict, allowed: set, path: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError("unknown key", where)


def _obj(d: Any, path: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    return d


def _num(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("expected a number", path)
    return float(v)


def _int(v: Any, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("expected an integer", path)
    return v


def _num_list(v: Any, path: str, n: int | None = None) -> list[float]:
    if not isinstance(v, list):
        raise ConfigError("expected a list", path)
    out = [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if n is not None and len(out) != n:
        raise ConfigError(f"expected {n} entries", path)
    return out


def config_from_dict(d: dict) -> ExperimentConfig:
    d = _obj(d, "")
    _reject_unknown(d, _TOP_KEYS, "")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", "schema_version")

    out = _obj(d.get("outcome"), "outcome")
    _reject_unknown(out, {"family", "means", "sds"}, "outcome")
    if "means" not in out:
        raise ConfigError("required", "outcome.means")
    means = _num_list(out["means"], "outcome.means")
    k = len(means)
    if k < 2:
        raise ConfigError("at least two arms are required", "outcome.means")
    if "arms" in d and _int(d["arms"], "arms") != k:
        raise ConfigError(f"{d['arms']} arms but {k} means", "arms")
    family = out.get("family", "normal")
    sds = _num_list(out.get("sds", [1.0] * k), "outcome.sds", k)
    outcome = OutcomeSpec(tuple(means), tuple(sds), family)

    dl = _obj(d.get("delay", {}), "delay")
    _reject_unknown(dl, {"censor_prob", "finite"}, "delay")
    cp = dl.get("censor_prob", 0.0)
    cp = _num_list(cp, "delay.censor_prob", k) if isinstance(cp, list) else [_num(cp, "delay.censor_prob")] * k
    fin = dl.get("finite", {"kind": "zero"})
    if isinstance(fin, list):
        if len(fin) != k:
            raise ConfigError(f"expected {k} entries", "delay.finite")
        finite = [finite_delay_from_dict(f, f"delay.finite[{i}]") for i, f in enumerate(fin)]
    else:
        finite = [finite_delay_from_dict(fin, "delay.finite")] * k
    delay = DelaySpec(tuple(cp), tuple(finite))

    pol = _obj(d.get("policy", {}), "policy")
    _reject_unknown(pol, {"kind", "alpha", "clip_c", "ucb_c", "beta_priors"}, "policy")
    kind = pol.get("kind", "egreedy")
    if kind not in POLICY_KINDS:
        raise ConfigError(f"unknown policy kind {kind!r}", "policy.kind")
    priors = pol.get("beta_priors")
    if priors is not None:
        if not isinstance(priors, list):
            raise ConfigError("expected a list of [alpha, beta] pairs", "policy.beta_priors")
        priors = tuple(tuple(_num_list(p, f"policy.beta_priors[{i}]", 2)) for i, p in enumerate(priors))
    policy = PolicyConfig(
        kind=kind,
        alpha=_num(pol.get("alpha", 0.3), "policy.alpha"),
        clip_c=_num(pol.get("clip_c", 1.0), "policy.clip_c"),
        ucb_c=_num(pol.get("ucb_c", 1.0), "policy.ucb_c"),
        beta_priors=priors,
    )

    contrasts = d.get("contrasts", [])
    if not isinstance(contrasts, list):
        raise ConfigError("expected a list", "contrasts")
    contrasts = tuple(tuple(_num_list(w, f"contrasts[{i}]", k)) for i, w in enumerate(contrasts))

    estimators = d.get("estimators", list(ESTIMATORS))
    if not isinstance(estimators, list) or not all(isinstance(e, str) for e in estimators):
        raise ConfigError("expected a list of names", "estimators")
    weights = d.get("weights", SQRT_PROPENSITY)
    if not isinstance(weights, str):
        raise ConfigError("expected a string", "weights")
    nh0_mode = d.get("nh0_mode", "paper_text")
    if not isinstance(nh0_mode, str):
        raise ConfigError("expected a string", "nh0_mode")

    return ExperimentConfig(
        outcome=outcome,
        delay=delay,
        policy=policy,
        weights=weights,
        horizon=_int(d.get("horizon", DEFAULT_HORIZON), "horizon"),
        replications=_int(d.get("replications", DEFAULT_REPLICATIONS), "replications"),
        seed=_int(d.get("seed", DEFAULT_SEED), "seed"),
        contrasts=contrasts,
        ci_level=_num(d.get("ci_level", 0.05), "ci_level"),
        estimators=tuple(estimators),
        nh0_mode=nh0_mode,
        mu_clip=_num(d.get("mu_clip", DEFAULT_MU_CLIP), "mu_clip"),
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(d)


def study_config(
    margin: float | None = None,
    finite: str = "none",
    horizon: int = DEFAULT_HORIZON,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = DEFAULT_SEED,
    alpha: float = 0.3,
) -> ExperimentConfig:
    """Two-arm normal designs with half of arm 1's outcomes never arriving.

    ``margin=None`` gives means (1.0, 0.5); otherwise (1.0, 1.0 - margin).
    ``finite`` picks the finite delay on both arms: ``none``,
    ``negative_binomial`` (r=2, p=0.5) or ``rounded_pareto`` (shape 0.7, scale 1).
    """
    from .env import NegativeBinomialDelay, RoundedParetoDelay

    means = (1.0, 0.5) if margin is None else (1.0, 1.0 - margin)
    comp = {
        "none": ZeroDelay(),
        "negative_binomial": NegativeBinomialDelay(2.0, 0.5),
        "rounded_pareto": RoundedParetoDelay(0.7, 1.0),
    }[finite]
    return ExperimentConfig(
        outcome=OutcomeSpec(means, (1.0, 1.0)),
        delay=DelaySpec((0.5, 0.0), (comp, comp)),
        policy=PolicyConfig("egreedy", alpha=alpha),
        horizon=horizon,
        replications=replications,
        seed=seed,
        contrasts=((1.0, -1.0),),
    )
