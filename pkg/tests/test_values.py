from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import ACTIONS, PERCEPTS, random_mixture
from uailab.environments import (
    EnvironmentMixture,
    History,
    Percept,
    example1_class,
    single_state_environment,
)
from uailab.errors import DeadEnd, ResourceLimitError, UndefinedHorizon
from uailab.values import (
    DiscountSchedule,
    Planner,
    ValueKind,
    brute_force_oracle,
    effective_horizon,
    effective_horizon_scan,
    entropy_value,
    eps_optimal_action,
    info_value,
    optimal_value,
    policy_value,
    reward_value,
)

GEO = DiscountSchedule.geometric(Fraction(1, 2))
ZERO, ONE = Percept("0"), Percept("1")


# -- discounting -------------------------------------------------------------


def test_geometric_horizons():
    for t in (1, 2, 17, 1000):
        assert effective_horizon(GEO, t, Fraction(1, 4)) == 2
        assert effective_horizon(GEO, t, Fraction(1, 2)) == 1


def test_table_horizon():
    d = DiscountSchedule.finite([1, 1, 1, 1])
    assert d.Gamma(1) == 4 and d.Gamma(3) == 2
    assert effective_horizon(d, 1, Fraction(1, 2)) == 2
    with pytest.raises(UndefinedHorizon):
        effective_horizon(d, 5, Fraction(1, 2))


@given(
    st.fractions(min_value=Fraction(1, 20), max_value=Fraction(19, 20)),
    st.integers(1, 50),
    st.fractions(min_value=Fraction(1, 10**6), max_value=Fraction(999, 1000)),
)
@settings(max_examples=100)
def test_closed_form_matches_scan(base, t, eps):
    d = DiscountSchedule.geometric(base)
    assert effective_horizon(d, t, eps) == effective_horizon_scan(d, t, eps)


def test_discount_parse():
    assert DiscountSchedule.parse("geometric:1/3").base == Fraction(1, 3)
    assert DiscountSchedule.parse("table:1,1").table == (1, 1)
    with pytest.raises(ValueError):
        DiscountSchedule.parse("hyperbolic:1")
    with pytest.raises(ValueError):
        DiscountSchedule.geometric(1)


# -- Example 1 -----------------------------------------------------------------


def test_example1_entropy_values():
    mix = example1_class()
    h = History()
    alpha = entropy_value(mix, h, 1, policy=lambda _: "alpha")
    beta = entropy_value(mix, h, 1, policy=lambda _: "beta")
    assert alpha == pytest.approx(0.1 * math.log2(20), abs=1e-12)
    assert beta == pytest.approx(0.5, abs=1e-12)
    res = optimal_value(ValueKind.entropy(mix), h, 1)
    assert res.best_action == "beta"
    norm = optimal_value(ValueKind.entropy(mix, normalized=True), h, 1)
    assert norm.best_action == "alpha"
    assert norm.per_action_values == pytest.approx({"alpha": 1.0, "beta": 0.0})


def _literal_info_example1(action: str) -> float:
    # independent evaluation of the double sum: for each member and percept,
    # w * nu(e) * log2(nu(e) / xi_norm(e)) with xi_norm = normalized one-step mixture
    nu = {
        "alpha": [{"0": 0.1}, {"1": 0.1}],
        "beta": [{"0": 0.5}, {"0": 0.5}],
    }[action]
    xi = {}
    for row in nu:
        for e, p in row.items():
            xi[e] = xi.get(e, 0.0) + 0.5 * p
    total = sum(xi.values())
    return sum(0.5 * p * math.log2(p / (xi[e] / total)) for row in nu for e, p in row.items())


def test_example1_information_values():
    mix = example1_class()
    res = optimal_value(ValueKind.info(mix), History(), 1)
    for a in ("alpha", "beta"):
        assert res.per_action_values[a] == pytest.approx(_literal_info_example1(a), abs=1e-12)
    assert res.per_action_values["alpha"] == pytest.approx(-0.2321928094887362, abs=1e-12)
    assert res.per_action_values["beta"] == pytest.approx(-0.5, abs=1e-12)


def test_eps_optimal_action_examples():
    mix = example1_class()
    kind = ValueKind.entropy(mix)
    assert eps_optimal_action(kind, History(), Fraction(1, 100), 1) == "beta"
    assert eps_optimal_action(kind, History(), 10, 1) == "alpha"
    with pytest.raises(ValueError):
        eps_optimal_action(kind, History(), 0, 1)


# -- information value -----------------------------------------------------------


def _coin_class():
    always0 = single_state_environment("zero", ACTIONS, PERCEPTS, {a: {PERCEPTS[0]: 1} for a in ACTIONS})
    always1 = single_state_environment("one", ACTIONS, PERCEPTS, {a: {PERCEPTS[1]: 1} for a in ACTIONS})
    return EnvironmentMixture([always0, always1], [Fraction(1, 2)] * 2, ACTIONS, PERCEPTS)


def test_information_of_two_deterministic_members():
    res = optimal_value(ValueKind.info(_coin_class()), History(), 1)
    # 2 * (1/2) * 1 * log2(1 / (1/2))
    assert res.per_action_values == pytest.approx({"a": 1.0, "b": 1.0}, abs=1e-12)
    assert info_value(_coin_class(), History(), 3) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_singleton_information_is_zero(seed, m):
    mix = random_mixture(random.Random(seed), members=1, measure=True)
    mix = EnvironmentMixture(mix.members, [Fraction(1)], ACTIONS, PERCEPTS)
    assert info_value(mix, History(), m) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_information_nonnegative_on_measures(seed, m):
    mix = random_mixture(random.Random(seed), members=3, measure=True)
    assert info_value(mix, History(), m) >= -1e-12


# -- entropy value ---------------------------------------------------------------


def test_deterministic_measure_has_zero_entropy():
    zero = single_state_environment("z", ACTIONS, PERCEPTS, {a: {PERCEPTS[0]: 1} for a in ACTIONS})
    mix = EnvironmentMixture([zero], [Fraction(1)])
    assert entropy_value(mix, History(), 3) == 0.0


@given(st.integers(0, 10_000), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_normalized_entropy_bounds(seed, m):
    mix = random_mixture(random.Random(seed), members=2, measure=False)
    v = entropy_value(mix, History(), m, normalized=True)
    assert -1e-12 <= v <= m * math.log2(len(PERCEPTS)) + 1e-12


def test_dead_end_propagates():
    silent = single_state_environment("s", ("a",), (ZERO,), {"a": {}})
    mix = EnvironmentMixture([silent], [Fraction(1)])
    with pytest.raises(DeadEnd):
        entropy_value(mix, History(), 1, normalized=True)
    with pytest.raises(DeadEnd):
        info_value(mix, History(), 1)


def test_lifetime_before_now_is_rejected():
    with pytest.raises(ValueError):
        entropy_value(example1_class(), History().extend("beta", ZERO), 0)


# -- reward value ------------------------------------------------------------------

WIN, LOSE = Percept("w", 1), Percept("l", 0)


def _bandit():
    return single_state_environment(
        "bandit", ("good", "bad"), (WIN, LOSE), {"good": {WIN: 1}, "bad": {LOSE: 1}}
    )


def test_reward_examples():
    env = _bandit()
    eps = Fraction(1, 1000)
    assert reward_value(env, GEO, History(), eps_trunc=eps) == pytest.approx(1.0, abs=float(eps))
    assert reward_value(env, GEO, History(), policy=lambda _: "good") == pytest.approx(1.0, abs=1e-3)
    assert reward_value(env, GEO, History(), policy=lambda _: "bad") == 0.0
    short = DiscountSchedule.finite([1, 1])
    h = History().extend("good", WIN).extend("good", WIN)
    assert reward_value(env, short, h) == 0.0


def test_reward_of_constant_stream():
    env = single_state_environment("one", ("x",), (WIN,), {"x": {WIN: 1}})
    v = reward_value(env, GEO, History(), eps_trunc=Fraction(1, 100))
    assert 1 - 0.01 <= v <= 1


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_truncation_error_bound(seed):
    rng = random.Random(seed)
    mix = random_mixture(rng, members=2, measure=True)
    table = DiscountSchedule.finite([Fraction(rng.randint(0, 4), 4) for _ in range(5)] + [1])
    kind = ValueKind.reward(mix, table)
    full = optimal_value(kind, History(), 6).value
    eps = Fraction(1, 4)
    truncated = reward_value(mix, table, History(), eps_trunc=eps)
    assert -1e-12 <= full - truncated <= float(eps) + 1e-12
    assert -1e-12 <= truncated <= 1 + 1e-12


def test_reward_scaling_keeps_argmax():
    rng = random.Random(5)
    for _ in range(10):
        p = Fraction(rng.randint(1, 7), 8)
        q = Fraction(rng.randint(1, 7), 8)
        c = Fraction(1, 3)

        def env(scale):
            win = Percept("w", scale)
            return single_state_environment(
                "e", ("a", "b"), (win, LOSE), {"a": {win: p, LOSE: 1 - p}, "b": {win: q, LOSE: 1 - q}}
            )

        base = optimal_value(ValueKind.reward(env(1), GEO), History(), 4)
        scaled = optimal_value(ValueKind.reward(env(c), GEO), History(), 4)
        assert scaled.best_action == base.best_action
        assert scaled.value == pytest.approx(float(c) * base.value, abs=1e-12)


def test_certified_reward_action():
    env = _bandit()
    kind = ValueKind.reward(env, GEO)
    assert eps_optimal_action(kind, History(), Fraction(1, 10**6)) == "good"
    tie = single_state_environment("tie", ("a", "b"), (WIN,), {"a": {WIN: 1}, "b": {WIN: 1}})
    assert eps_optimal_action(ValueKind.reward(tie, GEO), History(), 1e-9) == "a"


def test_planner_node_cap():
    mix = random_mixture(random.Random(1), members=2, measure=True)
    planner = Planner(mix, max_nodes=5)
    with pytest.raises(ResourceLimitError):
        optimal_value(ValueKind.entropy(mix), History(), 4, planner=planner)


def test_float_mode_matches_exact():
    mix = random_mixture(random.Random(3), members=3, measure=True)
    for kind in (ValueKind.entropy(mix), ValueKind.info(mix), ValueKind.reward(mix, GEO)):
        a = optimal_value(kind, History(), 3)
        b = optimal_value(kind, History(), 3, exact=False)
        assert b.per_action_values == pytest.approx(a.per_action_values, abs=1e-9)


def test_value_kind_validation():
    with pytest.raises(TypeError):
        ValueKind("entropy", _bandit())
    with pytest.raises(ValueError):
        ValueKind("reward", _bandit())
    with pytest.raises(ValueError):
        ValueKind("fun", example1_class())


# -- oracle agreement ----------------------------------------------------------------


def _kinds(mix, rng):
    disc = DiscountSchedule.geometric(Fraction(rng.randint(1, 3), 4))
    return [
        ValueKind.entropy(mix),
        ValueKind.entropy(mix, normalized=True),
        ValueKind.info(mix),
        ValueKind.reward(mix, disc),
    ]


@given(st.integers(0, 2**32), st.integers(1, 3), st.booleans())
@settings(max_examples=30, deadline=None)
def test_planner_matches_brute_force(seed, depth, measure):
    rng = random.Random(seed)
    mix = random_mixture(rng, members=rng.randint(1, 3), measure=measure)
    for kind in _kinds(mix, rng):
        ours = optimal_value(kind, History(), depth)
        oracle = brute_force_oracle(kind, History(), depth)
        assert ours.per_action_values == pytest.approx(oracle.per_action_values, abs=1e-9)
        assert ours.best_action == oracle.best_action


@given(st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_optimal_dominates_explicit_policies(seed):
    rng = random.Random(seed)
    mix = random_mixture(rng, members=2, measure=rng.random() < 0.5)
    table = {}

    def policy(h):
        key = h.steps
        if key not in table:
            table[key] = rng.choice(ACTIONS)
        return table[key]

    for kind in _kinds(mix, rng):
        best = optimal_value(kind, History(), 3).value
        assert policy_value(kind, History(), 3, policy) <= best + 1e-12


def test_oracle_caps_and_base_case():
    mix = random_mixture(random.Random(0), members=2)
    kind = ValueKind.reward(mix, GEO)
    assert brute_force_oracle(kind, History(), 0).value == 0.0
    with pytest.raises(ResourceLimitError):
        brute_force_oracle(kind, History(), 6)
    res = brute_force_oracle(ValueKind.entropy(example1_class()), History(), 1)
    assert (res.best_action, res.value) == ("beta", pytest.approx(0.5))
