import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbandit.core import validate_instance
from qbandit.policies import (CountStats, PolicyKind, UnsampledArm, explore_probability, policy_decide,
                              policy_update, thompson_sample, ucb_index)


def test_explore_probability_values():
    assert explore_probability(100, 5, 3.0) == 1.0
    assert explore_probability(10_000, 5, 3.0) == pytest.approx(15 * math.log(1e4) ** 2 / 1e4)
    assert explore_probability(1, 5, 3.0) == 0.0
    assert explore_probability(10_000, 5, 0.0) == 0.0
    with pytest.raises(ValueError):
        explore_probability(0, 5)


@given(st.integers(1, 10 ** 7), st.integers(1, 10), st.floats(0, 10))
def test_explore_probability_is_a_probability(t, K, c):
    assert 0.0 <= explore_probability(t, K, c) <= 1.0


def test_thompson_sample():
    rng = np.random.default_rng(0)
    x = np.array([thompson_sample(30, 40, rng) for _ in range(4000)])
    assert np.all((x > 0) & (x < 1))
    assert x.mean() == pytest.approx(31 / 42, abs=0.01)
    with pytest.raises(ValueError):
        thompson_sample(5, 4, rng)


def test_ucb_index():
    assert ucb_index(3, 4, 100) == pytest.approx(0.75 + math.sqrt(2 * math.log(100) / 4))
    with pytest.raises(UnsampledArm):
        ucb_index(0, 0, 10)


def test_policy_kind():
    assert PolicyKind("qths").label == "qths_c3"
    assert PolicyKind("qths", 0.4).label == "qths_c0.4"
    assert PolicyKind("ucb1", 7.0).label == "ucb1"
    assert PolicyKind.from_dict({"policy": "qucb", "explore_const": 1}).to_dict() == {
        "policy": "qucb", "explore_const": 1.0}
    with pytest.raises(ValueError):
        PolicyKind("greedy")
    with pytest.raises(ValueError):
        PolicyKind("qths", -1.0)


@pytest.fixture
def inst():
    return validate_instance(1, 5, [0.55], [[0.65, 0.48, 0.40, 0.30, 0.20]])


def test_qths_explores_surely_at_t100(inst):
    rng = np.random.default_rng(1)
    stats = CountStats.empty(1, 5)
    for _ in range(50):
        m, explored = policy_decide(PolicyKind("qths"), stats, inst, 100, rng)
        assert explored and len(m) == 1


def test_genie_and_uniform(inst):
    rng = np.random.default_rng(2)
    assert policy_decide(PolicyKind("genie"), CountStats.empty(1, 5), inst, 7, rng) == ((0,), False)
    seen = {policy_decide(PolicyKind("uniform"), CountStats.empty(1, 5), inst, 7, rng)[0] for _ in range(200)}
    assert seen == {(k,) for k in range(5)}


def test_ucb_cold_start_then_index(inst):
    rng = np.random.default_rng(3)
    stats = CountStats.empty(1, 5)
    for t in range(1, 6):
        m, explored = policy_decide(PolicyKind("ucb1"), stats, inst, t, rng)
        assert m == (t - 1,) and not explored
        stats = policy_update(stats, m, [t == 3])
    # server 2 succeeded once, the others never
    assert policy_decide(PolicyKind("ucb1"), stats, inst, 6, rng) == ((2,), False)
    with pytest.raises(UnsampledArm):
        policy_decide(PolicyKind("ucb1"), CountStats.empty(1, 5), inst, 9, rng)


def test_zero_constant_matches_thompson(inst):
    stats = CountStats(np.array([[9, 4, 3, 2, 1]]), np.array([[6, 2, 1, 1, 0]]))
    a, b = np.random.default_rng(4), np.random.default_rng(4)
    for t in range(1, 300):
        assert (policy_decide(PolicyKind("qths", 0.0), stats, inst, t, a)
                == policy_decide(PolicyKind("thompson"), stats, inst, t, b))


def test_exploit_output_is_matching():
    inst = validate_instance(3, 4, [0.1, 0.1, 0.1], [[0.9, 0.2, 0.3, 0.4], [0.2, 0.9, 0.3, 0.4], [0.2, 0.3, 0.9, 0.4]])
    rng = np.random.default_rng(5)
    stats = CountStats.empty(3, 4)
    for t in range(1, 500):
        m, _ = policy_decide(PolicyKind("qths"), stats, inst, t, rng)
        assert len(set(m)) == 3
        stats = policy_update(stats, m, rng.random(3) < inst.mu[np.arange(3), m])
    assert stats.T.sum() == 3 * 499


def test_update_touches_only_scheduled_links():
    s0 = CountStats.empty(2, 3)
    s1 = policy_update(s0, (2, 0), [True, False])
    assert s1.T.tolist() == [[0, 0, 1], [1, 0, 0]]
    assert s1.S.tolist() == [[0, 0, 1], [0, 0, 0]]
    assert s0.T.sum() == 0
    assert np.isnan(s1.mu_hat[0, 0]) and s1.mu_hat[0, 2] == 1.0
