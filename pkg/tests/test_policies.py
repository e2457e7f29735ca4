import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from dbi.env import (
    DelaySpec,
    NegativeBinomialDelay,
    OutcomeSpec,
    RoundedParetoDelay,
    TrajectoryRecord,
    arrivals_up_to,
    simulate,
)
from dbi.errors import ConfigError, DoubleDeliveryError
from dbi.policies import (
    PolicyConfig,
    PolicyState,
    egreedy_propensities,
    epsilon,
    prob_greater,
    propensities,
    thompson_clipped_propensity,
    ucb_clipped_propensities,
    update_on_arrivals,
)


def state_with_means(means, counts=None):
    means = np.asarray(means, dtype=float)
    counts = np.ones(len(means), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
    return PolicyState(counts, means * counts, np.ones((len(means), 2)))


def beta_state(post):
    # post = [(a0, b0), (a1, b1)] with a uniform prior underneath
    post = np.asarray(post, dtype=float)
    succ = post[:, 0] - 1
    fail = post[:, 1] - 1
    return PolicyState((succ + fail).astype(np.int64), succ, np.ones((2, 2)))


def prob_greater_exact(a1, b1, a0, b0):
    """Closed-form P(theta1 > theta0) for integer a1 (finite sum)."""
    total = 0.0
    for i in range(int(a1)):
        total += math.exp(
            special.betaln(a0 + i, b0 + b1) - math.log(b1 + i) - special.betaln(1 + i, b1) - special.betaln(a0, b0)
        )
    return total


# ------------------------------------------------------------------ egreedy


def test_egreedy_decayed_split():
    cfg = PolicyConfig("egreedy", alpha=0.5, clip_c=1.0)
    pi = egreedy_propensities(state_with_means([0.9, 0.1]), 16, cfg)
    np.testing.assert_allclose(pi, [0.75, 0.25], rtol=0, atol=1e-15)


def test_egreedy_alpha_zero_is_uniform_for_two_arms():
    cfg = PolicyConfig("egreedy", alpha=0.0, clip_c=3.0)
    for t in (1, 10, 1000):
        np.testing.assert_array_equal(egreedy_propensities(state_with_means([2.0, 0.0]), t, cfg), [0.5, 0.5])


def test_egreedy_three_arms_share_exploration():
    # C * t^-alpha = 0.3 with alpha=0 needs C=0.3
    cfg = PolicyConfig("egreedy", alpha=0.0, clip_c=0.3)
    pi = egreedy_propensities(state_with_means([0.0, 1.0, 0.5]), 5, cfg)
    np.testing.assert_allclose(pi, [0.15, 0.7, 0.15], atol=1e-15)
    assert abs(pi.sum() - 1) <= 1e-12


def test_epsilon_clamped_at_small_t():
    cfg = PolicyConfig(alpha=0.3, clip_c=1.0)
    assert epsilon(1, cfg, 2) == 0.5
    assert epsilon(1, cfg, 4) == 0.75
    assert epsilon(1000, cfg, 2) == pytest.approx(1000**-0.3)


def test_unobserved_arm_ranks_first():
    cfg = PolicyConfig(alpha=0.5)
    st_ = state_with_means([5.0, 0.0, 0.0], counts=[3, 0, 0])
    pi = egreedy_propensities(st_, 100, cfg)
    assert np.argmax(pi) == 1


def test_egreedy_tie_goes_to_smallest_id():
    cfg = PolicyConfig(alpha=0.5)
    pi = egreedy_propensities(state_with_means([0.2, 0.7, 0.7]), 100, cfg)
    assert np.argmax(pi) == 1


def test_single_arm_rejected():
    with pytest.raises(ConfigError):
        egreedy_propensities(state_with_means([1.0]), 1, PolicyConfig())
    with pytest.raises(ConfigError):
        ucb_clipped_propensities(state_with_means([1.0]), 1, PolicyConfig("ucb_clipped"))


@pytest.mark.parametrize("alpha", [1.0, -0.1, 1.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ConfigError, match="alpha out of range"):
        PolicyConfig(alpha=alpha)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(-1000, 1000), min_size=2, max_size=5),
    st.integers(-10**6, 10**6),
    st.integers(1, 10**5),
)
def test_egreedy_invariant_to_common_shift(means, shift, t):
    # Integer-valued means keep the shifted comparison exact.
    cfg = PolicyConfig(alpha=0.4)
    m = np.array(means, dtype=float)
    a = egreedy_propensities(state_with_means(m), t, cfg)
    b = egreedy_propensities(state_with_means(m + shift), t, cfg)
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------- thompson


def test_thompson_symmetric_posteriors():
    cfg = PolicyConfig("thompson_clipped", alpha=0.3)
    for post in ([(1, 1), (1, 1)], [(3, 7), (3, 7)], [(40, 2), (40, 2)]):
        pi = thompson_clipped_propensity(beta_state(post), 50, cfg)
        assert pi[1] == pytest.approx(0.5, abs=1e-12)


def test_thompson_two_thirds():
    assert prob_greater(2, 1, 1, 1) == pytest.approx(2 / 3, abs=1e-12)
    cfg = PolicyConfig("thompson_clipped", alpha=0.0, clip_c=0.1)
    pi = thompson_clipped_propensity(beta_state([(1, 1), (2, 1)]), 7, cfg)
    assert pi[1] == pytest.approx(2 / 3, abs=1e-12)
    assert pi[0] == pytest.approx(1 / 3, abs=1e-12)


def test_thompson_two_thirds_by_posterior_sampling():
    rng = np.random.default_rng(0)
    n = 10**6
    q = np.mean(rng.beta(2, 1, n) >= rng.beta(1, 1, n))
    assert abs(q - 2 / 3) < 4 * math.sqrt(2 / 9 / n)


def test_thompson_clip_active():
    cfg = PolicyConfig("thompson_clipped", alpha=0.0, clip_c=0.1)
    st_ = beta_state([(1, 60), (60, 1)])
    assert prob_greater(60, 1, 1, 60) > 0.99
    np.testing.assert_allclose(thompson_clipped_propensity(st_, 3, cfg), [0.1, 0.9], atol=1e-15)


@pytest.mark.parametrize(
    "a1,b1,a0,b0",
    [(2, 1, 1, 1), (5, 3, 4, 4), (1, 9, 3, 2), (30, 70, 25, 75), (200, 300, 210, 290),
     (1500, 1200, 1480, 1220), (3, 1000, 2, 1000), (7, 2, 7, 2)],
)
def test_prob_greater_matches_closed_form(a1, b1, a0, b0):
    assert prob_greater(a1, b1, a0, b0) == pytest.approx(prob_greater_exact(a1, b1, a0, b0), abs=1e-10)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0.5, 3000), st.floats(0.5, 3000), st.floats(0.5, 3000), st.floats(0.5, 3000)
)
def test_prob_greater_swap_symmetry(a1, b1, a0, b0):
    q = prob_greater(a1, b1, a0, b0)
    r = prob_greater(a0, b0, a1, b1)
    assert abs(q + r - 1.0) <= 1e-10


def test_thompson_rejects_non_binary_outcomes():
    with pytest.raises(ConfigError):
        simulate(OutcomeSpec((0.5, 0.5), (1.0, 1.0)), DelaySpec.uniform(2),
                 PolicyConfig("thompson_clipped"), "sqrt_propensity", 5, 0)


# ---------------------------------------------------------------------- ucb


def test_ucb_unpulled_arm_first():
    cfg = PolicyConfig("ucb_clipped", alpha=0.5)
    st_ = state_with_means([9.0, 0.0, 0.0, 1.0], counts=[10, 4, 0, 0])
    assert np.argmax(ucb_clipped_propensities(st_, 30, cfg)) == 2


def test_ucb_two_arm_split():
    # eps = C * t^-alpha = 0.2 at alpha = 0
    cfg = PolicyConfig("ucb_clipped", alpha=0.0, clip_c=0.2)
    st_ = state_with_means([0.0, 1.0], counts=[5, 5])
    np.testing.assert_allclose(ucb_clipped_propensities(st_, 10, cfg), [0.2, 0.8], atol=1e-15)


def test_ucb_bonus_favours_less_pulled_arm():
    cfg = PolicyConfig("ucb_clipped", alpha=0.5, ucb_c=1.0)
    st_ = state_with_means([0.6, 0.5], counts=[100, 2])
    assert np.argmax(ucb_clipped_propensities(st_, 100, cfg)) == 1


def test_ucb_ties_are_deterministic():
    cfg = PolicyConfig("ucb_clipped", alpha=0.5)
    st_ = state_with_means([0.5, 0.5, 0.5], counts=[4, 4, 4])
    results = {tuple(ucb_clipped_propensities(st_, 9, cfg)) for _ in range(5)}
    assert len(results) == 1
    assert np.argmax(next(iter(results))) == 0


# ---------------------------------------------------------------- arrivals


def rec(t, action, y):
    pi = np.array([0.5, 0.5])
    return TrajectoryRecord(t, action, 0.0, y, pi, np.sqrt(pi))


def test_no_arrivals_leaves_state_unchanged():
    st_ = PolicyState.initial(2)
    update_on_arrivals(st_, [])
    assert st_.counts.tolist() == [0, 0] and st_.sums.tolist() == [0.0, 0.0]


def test_conjugate_update():
    st_ = PolicyState.initial(2, PolicyConfig("thompson_clipped"))
    update_on_arrivals(st_, [rec(1, 0, 1.0)])
    np.testing.assert_array_equal(st_.posterior[0], [2.0, 1.0])
    np.testing.assert_array_equal(st_.posterior[1], [1.0, 1.0])


def test_running_mean():
    st_ = PolicyState.initial(2)
    update_on_arrivals(st_, [rec(1, 1, 0.4), rec(2, 1, 0.6)])
    assert st_.counts[1] == 2
    assert st_.means[1] == pytest.approx(0.5)
    assert np.isnan(st_.means[0])


def test_double_delivery_rejected():
    st_ = PolicyState.initial(2)
    update_on_arrivals(st_, [rec(1, 0, 1.0)])
    with pytest.raises(DoubleDeliveryError):
        update_on_arrivals(st_, [rec(1, 0, 1.0)])


# ------------------------------------------------------------------- replay


REPLAY_CASES = [
    (PolicyConfig("egreedy", 0.3), OutcomeSpec((1.0, 0.5), (1.0, 1.0)), RoundedParetoDelay()),
    (PolicyConfig("ucb_clipped", 0.4), OutcomeSpec((0.3, 0.5, 0.1), (1.0, 1.0, 1.0)), NegativeBinomialDelay()),
    (PolicyConfig("thompson_clipped", 0.3), OutcomeSpec((0.7, 0.6), (0, 0), "bernoulli"), NegativeBinomialDelay()),
]


@pytest.mark.parametrize("cfg,outcome,finite", REPLAY_CASES, ids=lambda x: getattr(x, "kind", ""))
def test_replay_from_log_reproduces_propensities(cfg, outcome, finite):
    k = outcome.n_arms
    spec = DelaySpec((0.3,) * k, (finite,) * k)
    tr = simulate(outcome, spec, cfg, "sqrt_propensity", 400, seed=17, rep=3)
    state = PolicyState.initial(k, cfg)
    seen: set[int] = set()
    for t in range(1, tr.horizon + 1):
        now = arrivals_up_to(tr, t - 1)
        # Deliver in arrival-time order, then by t, the order the simulator uses.
        new = sorted(now - seen, key=lambda s: (s + tr.delays[s - 1], s))
        by_time: dict[float, list] = {}
        for s in new:
            by_time.setdefault(s + tr.delays[s - 1], []).append(tr.record(s))
        for _, group in sorted(by_time.items()):
            update_on_arrivals(state, group)
        seen |= now
        np.testing.assert_array_equal(propensities(state, t, cfg), tr.propensities[t - 1], err_msg=f"t={t}")


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["egreedy", "ucb_clipped", "thompson_clipped"]),
    st.floats(0.0, 0.99),
    st.floats(0.05, 5.0),
    st.integers(1, 10**6),
    st.lists(st.integers(0, 50), min_size=2, max_size=4),
    st.data(),
)
def test_propensity_lower_bound(kind, alpha, c, t, counts, data):
    if kind == "thompson_clipped":
        counts = counts[:2]
    k = len(counts)
    counts = np.array(counts, dtype=np.int64)
    sums = np.array([data.draw(st.integers(0, int(n))) for n in counts], dtype=float)
    cfg = PolicyConfig(kind, alpha=alpha, clip_c=c)
    state = PolicyState(counts, sums, np.ones((k, 2)))
    pi = propensities(state, t, cfg)
    eps = epsilon(t, cfg, k)
    assert eps > 0
    assert pi.min() >= eps / (k - 1)
    assert abs(pi.sum() - 1) <= 1e-12


def test_lower_bound_exact_at_clamp():
    for k in range(2, 12):
        cfg = PolicyConfig("egreedy", alpha=0.0, clip_c=5.0)
        pi = egreedy_propensities(state_with_means(np.arange(k, dtype=float)), 1, cfg)
        assert pi.min() >= epsilon(1, cfg, k) / (k - 1)
        assert abs(pi.sum() - 1) <= 1e-12
