import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dbi.env import (
    DelaySpec,
    NegativeBinomialDelay,
    OutcomeSpec,
    RoundedParetoDelay,
    Trajectory,
    TrajectoryRecord,
    ZeroDelay,
    arrivals_up_to,
    choose_action,
    make_streams,
    sample_delay,
    sample_delays,
    simulate,
    simulate_batch,
    simulate_sequential,
    step,
)
from dbi.errors import ConfigError
from dbi.policies import PolicyConfig, PolicyState


def hand_trajectory(actions, delays, outcomes, pi=(0.5, 0.5)):
    n = len(actions)
    pis = np.tile(pi, (n, 1))
    return Trajectory(actions, delays, outcomes, pis, np.sqrt(pis))


# ------------------------------------------------------------------ delays


def test_zero_delay_is_always_zero():
    rng = np.random.default_rng(0)
    spec = DelaySpec.uniform(2, 0.0, ZeroDelay())
    assert all(sample_delay(rng, spec, a) == 0 for a in (0, 1) for _ in range(200))


@pytest.mark.parametrize(
    "finite", [ZeroDelay(), NegativeBinomialDelay(2, 0.5), RoundedParetoDelay(0.7, 1.0)]
)
def test_certain_censoring_is_always_inf(finite):
    rng = np.random.default_rng(1)
    spec = DelaySpec.uniform(2, 1.0, finite)
    assert all(math.isinf(sample_delay(rng, spec, 0)) for _ in range(200))


def test_rounded_pareto_zero_mass_matches_closed_form():
    # P(D = 0) = P(X < x_m + 1) for X ~ Pareto(x_m=1, 0.7) = 1 - (1/2)^0.7
    expected = 1.0 - (1.0 / 2.0) ** 0.7
    assert expected == pytest.approx(0.3844, abs=1e-4)
    spec = DelaySpec.uniform(1, 0.0, RoundedParetoDelay(0.7, 1.0))
    d = sample_delays(np.random.default_rng(2), spec, 0, 10**6)
    assert abs(np.mean(d == 0) - expected) < 0.002


def test_rounded_pareto_cdf_against_frequencies():
    comp = RoundedParetoDelay(1.3, 2.0)
    spec = DelaySpec.uniform(1, 0.0, comp)
    d = sample_delays(np.random.default_rng(3), spec, 0, 200_000)
    for m in (0, 1, 5, 20):
        assert abs(np.mean(d <= m) - float(comp.cdf(m))) < 4 * math.sqrt(0.25 / len(d))


def test_negative_binomial_cdf_matches_scipy():
    comp = NegativeBinomialDelay(2.0, 0.5)
    m = np.arange(0, 60)
    np.testing.assert_allclose(comp.cdf(m), stats.nbinom.cdf(m, 2.0, 0.5), atol=1e-13)
    comp = NegativeBinomialDelay(3.5, 0.2)
    m = np.arange(0, 200)
    np.testing.assert_allclose(comp.cdf(m), stats.nbinom.cdf(m, 3.5, 0.2), atol=1e-12)


def test_negative_binomial_draws_have_the_right_mean():
    spec = DelaySpec.uniform(1, 0.0, NegativeBinomialDelay(2.0, 0.5))
    d = sample_delays(np.random.default_rng(4), spec, 0, 100_000)
    mean, var = stats.nbinom.stats(2.0, 0.5)
    assert abs(d.mean() - mean) < 4 * math.sqrt(var / len(d))


def test_every_finite_component_has_mass_at_zero():
    for comp in (ZeroDelay(), NegativeBinomialDelay(2, 0.5), RoundedParetoDelay(0.7, 1)):
        assert float(comp.cdf(0)) > 0


@pytest.mark.parametrize(
    "make",
    [
        lambda: NegativeBinomialDelay(0.0, 0.5),
        lambda: NegativeBinomialDelay(-1.0, 0.5),
        lambda: NegativeBinomialDelay(2.0, 0.0),
        lambda: NegativeBinomialDelay(2.0, 1.0),
        lambda: RoundedParetoDelay(0.0, 1.0),
        lambda: RoundedParetoDelay(0.7, -1.0),
        lambda: DelaySpec((1.5,), (ZeroDelay(),)),
    ],
)
def test_invalid_delay_parameters_are_rejected(make):
    with pytest.raises(ConfigError):
        make()


def test_sample_delay_matches_vectorized_draws():
    spec = DelaySpec((0.3,), (NegativeBinomialDelay(2, 0.5),))
    a = sample_delays(np.random.default_rng(5), spec, 0, 500)
    rng = np.random.default_rng(5)
    b = np.array([sample_delay(rng, spec, 0) for _ in range(500)])
    np.testing.assert_array_equal(a, b)


def test_censoring_fraction_converges():
    q = 0.3
    spec = DelaySpec((q, 0.0), (NegativeBinomialDelay(2, 0.5), ZeroDelay()))
    tr = simulate(
        OutcomeSpec((0.0, 0.0), (1.0, 1.0)), spec, PolicyConfig(alpha=0.0),
        "sqrt_propensity", 200_000, seed=11,
    )
    arm1 = tr.delays[tr.actions == 0]
    assert len(arm1) > 10**5 - 5000
    se = math.sqrt(q * (1 - q) / len(arm1))
    assert abs(np.mean(np.isinf(arm1)) - q) < 3 * se
    assert not np.isinf(tr.delays[tr.actions == 1]).any()


# ---------------------------------------------------------------- outcomes


def test_outcome_moments():
    spec = OutcomeSpec((1.0, -0.5), (2.0, 0.5))
    y = spec.draw(np.random.default_rng(6), 100_000)
    n = len(y)
    for a in range(2):
        mu, sd = spec.means[a], spec.sds[a]
        assert abs(y[:, a].mean() - mu) < 4 * sd / math.sqrt(n)
        assert abs(y[:, a].var(ddof=1) - sd**2) < 4 * sd**2 * math.sqrt(2 / (n - 1))


def test_bernoulli_outcomes():
    spec = OutcomeSpec((0.2, 0.9), (0.0, 0.0), "bernoulli")
    y = spec.draw(np.random.default_rng(7), 100_000)
    assert set(np.unique(y)) <= {0.0, 1.0}
    for a, p in enumerate((0.2, 0.9)):
        assert abs(y[:, a].mean() - p) < 4 * math.sqrt(p * (1 - p) / len(y))


def test_bernoulli_mean_outside_unit_interval_rejected():
    with pytest.raises(ConfigError):
        OutcomeSpec((1.2, 0.5), (0, 0), "bernoulli")


# -------------------------------------------------------------------- step


def test_degenerate_policy_always_plays_first_arm():
    u = np.random.default_rng(8).random(10_000)
    a = choose_action(np.tile([1.0, 0.0], (len(u), 1)), u)
    assert (a == 0).all()


def test_choose_action_never_picks_zero_mass_arm():
    pi = np.array([0.3, 0.7, 0.0])
    assert int(choose_action(pi, 0.999999999999)) == 1


def test_noiseless_outcome_equals_arm_mean():
    outcome = OutcomeSpec((1.0, 0.5), (0.0, 0.0))
    spec = DelaySpec.uniform(2)
    tr = simulate(outcome, spec, PolicyConfig(), "sqrt_propensity", 300, seed=1)
    np.testing.assert_array_equal(tr.outcomes, np.where(tr.actions == 0, 1.0, 0.5))


def test_step_is_deterministic():
    outcome = OutcomeSpec((1.0, 0.5), (1.0, 1.0))
    spec = DelaySpec((0.5, 0.0), (ZeroDelay(), ZeroDelay()))
    policy = PolicyConfig()

    def one():
        state = PolicyState.initial(2, policy)
        return step(make_streams(3, 9), 1, state, outcome, spec, policy, "sqrt_propensity")

    r1, r2 = one(), one()
    assert (r1.t, r1.action, r1.delay, r1.outcome) == (r2.t, r2.action, r2.delay, r2.outcome)
    np.testing.assert_array_equal(r1.propensities, r2.propensities)
    np.testing.assert_array_equal(r1.potential, r2.potential)


def test_record_keeps_outcome_when_censored():
    outcome = OutcomeSpec((1.0, 0.5), (1.0, 1.0))
    spec = DelaySpec.uniform(2, 1.0)
    tr = simulate(outcome, spec, PolicyConfig(), "sqrt_propensity", 50, seed=2)
    assert np.isinf(tr.delays).all()
    assert np.isfinite(tr.outcomes).all()
    np.testing.assert_array_equal(tr.outcomes, tr.potential[np.arange(50), tr.actions])


POLICIES = [
    (PolicyConfig("egreedy", 0.3), OutcomeSpec((1.0, 0.5), (1.0, 1.0))),
    (PolicyConfig("ucb_clipped", 0.5, ucb_c=0.5), OutcomeSpec((0.2, 0.5, 0.4), (1.0, 1.0, 1.0))),
    (PolicyConfig("thompson_clipped", 0.2), OutcomeSpec((0.6, 0.4), (0, 0), "bernoulli")),
]


@pytest.mark.parametrize("policy,outcome", POLICIES, ids=lambda p: getattr(p, "kind", ""))
@pytest.mark.parametrize("finite", [ZeroDelay(), NegativeBinomialDelay(2, 0.5), RoundedParetoDelay(0.7, 1)])
def test_batched_generator_matches_stepwise_reference(policy, outcome, finite):
    k = outcome.n_arms
    spec = DelaySpec((0.4,) + (0.0,) * (k - 1), (finite,) * k)
    ref = simulate_sequential(outcome, spec, policy, "sqrt_propensity", 300, seed=5, rep=2)
    got = simulate_batch(outcome, spec, policy, "sqrt_propensity", 300, seed=5, reps=[0, 2, 7])[1]
    for name in ("actions", "delays", "outcomes", "propensities", "weights", "potential"):
        np.testing.assert_array_equal(getattr(ref, name), getattr(got, name), err_msg=name)


def test_replication_does_not_depend_on_batch_companions():
    outcome = OutcomeSpec((1.0, 0.5), (1.0, 1.0))
    spec = DelaySpec((0.5, 0.0), (RoundedParetoDelay(),) * 2)
    a = simulate_batch(outcome, spec, PolicyConfig(), "sqrt_propensity", 200, 1, [4])[0]
    b = simulate_batch(outcome, spec, PolicyConfig(), "sqrt_propensity", 200, 1, [9, 4, 0])[1]
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)


def test_distinct_replications_differ():
    outcome = OutcomeSpec((1.0, 0.5), (1.0, 1.0))
    trs = simulate_batch(outcome, DelaySpec.uniform(2), PolicyConfig(), "sqrt_propensity", 100, 1, [0, 1])
    assert not np.array_equal(trs[0].outcomes, trs[1].outcomes)


def test_propensities_on_simplex():
    outcome = OutcomeSpec((1.0, 0.5, 0.9), (1.0, 1.0, 1.0))
    for policy in (PolicyConfig("egreedy", 0.7), PolicyConfig("ucb_clipped", 0.4)):
        tr = simulate(outcome, DelaySpec.uniform(3, 0.2, NegativeBinomialDelay()), policy, "sqrt_propensity", 2000, 3)
        assert np.all(tr.propensities >= 0)
        assert np.abs(tr.propensities.sum(axis=1) - 1).max() <= 1e-12


# ---------------------------------------------------------------- arrivals


def test_arrivals_with_no_delay():
    tr = hand_trajectory([0, 1, 0, 1], [0, 0, 0, 0], [1.0, 2.0, 3.0, 4.0])
    assert arrivals_up_to(tr, 4) == {1, 2, 3, 4}


def test_arrival_boundary():
    delays = [0, 0, 5, 0, 0, 0, 0, 0]
    tr = hand_trajectory([0] * 8, delays, [0.0] * 8)
    assert 3 not in arrivals_up_to(tr, 7)
    assert 3 in arrivals_up_to(tr, 8)


def test_censored_never_arrives():
    tr = hand_trajectory([0, 0, 0], [math.inf, 0, 0], [1.0, 1.0, 1.0])
    for cut in range(4):
        assert 1 not in arrivals_up_to(tr, cut)


def test_arrivals_out_of_range():
    tr = hand_trajectory([0], [0], [1.0])
    with pytest.raises(ValueError):
        arrivals_up_to(tr, 2)


delay_lists = st.lists(
    st.one_of(st.integers(0, 30).map(float), st.just(math.inf)), min_size=1, max_size=40
)


@settings(max_examples=300, deadline=None)
@given(delay_lists)
def test_arrivals_monotone_and_empty_at_zero(delays):
    n = len(delays)
    tr = hand_trajectory([0] * n, delays, [0.0] * n)
    assert arrivals_up_to(tr, 0) == set()
    prev = set()
    for cut in range(n + 1):
        cur = arrivals_up_to(tr, cut)
        assert prev <= cur
        assert cur == {t for t in range(1, n + 1) if t + delays[t - 1] <= cut}
        prev = cur


def test_trajectory_from_records_rejects_gaps():
    pi = np.array([0.5, 0.5])
    recs = [TrajectoryRecord(1, 0, 0.0, 1.0, pi, pi), TrajectoryRecord(3, 0, 0.0, 1.0, pi, pi)]
    with pytest.raises(ValueError):
        Trajectory.from_records(recs)
