import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbandit.bounds import (DivergentKL, WindowEmpty, bernoulli_kl, bound_curves, corollary_upper, d_mu,
                            early_stage_heuristic_ub, early_stage_lb, early_stage_window_right,
                            explore_count_bound, explore_mean_bound, late_stage_lb, ths_upper_terms,
                            write_bounds_csv)
from qbandit.core import validate_instance

# reference values computed independently at 30 significant digits


def test_kl_golden():
    assert bernoulli_kl(0.25, 0.75) == pytest.approx(0.549306144334055, abs=1e-12)
    assert bernoulli_kl(0.4, 0.8) == pytest.approx(0.381908500976888, abs=1e-12)
    assert bernoulli_kl(0.2, 0.825) == pytest.approx(0.932447399038202, abs=1e-12)


def test_instance_constants(fig1):
    assert d_mu(fig1) == pytest.approx(0.182315914201006, abs=1e-12)
    assert early_stage_window_right(fig1) == pytest.approx(3.64631828402012, abs=1e-10)
    assert late_stage_lb(fig1, 0.5, 1000) == pytest.approx(5.01368764052767e-05, rel=1e-12)
    b = early_stage_lb(fig1, 0.5, 2.5, 1000)
    assert b.value == pytest.approx(1.30328528224903, rel=1e-12)
    assert b.window_left_nominal == pytest.approx(5 ** 2.5)
    assert b.effectively_empty


def test_explore_bounds():
    assert explore_count_bound(990, 1000, 5, 1000) == pytest.approx(35.9156475936939, rel=1e-12)
    assert explore_mean_bound(1000, 10_000, 5) == pytest.approx(2258.49323744576, rel=1e-12)
    assert explore_mean_bound(1000, 10_000, 5, c=0.4) == pytest.approx(2258.49323744576 * 0.4 / 3)
    assert corollary_upper(5, 0.1, 1e5) == pytest.approx(7.63004472110054, rel=1e-12)
    assert early_stage_heuristic_ub(5, 1000) == pytest.approx(3296.17931951543, rel=1e-12)
    with pytest.raises(ValueError):
        explore_count_bound(10, 5, 5, 100)


@given(st.floats(0, 1), st.floats(0.001, 0.999))
def test_kl_nonnegative(p, q):
    assert bernoulli_kl(p, q) >= 0
    assert bernoulli_kl(q, q) == pytest.approx(0, abs=1e-15)


def test_kl_edges():
    assert bernoulli_kl(0.0, 0.0) == 0.0
    with pytest.raises(DivergentKL):
        bernoulli_kl(0.5, 1.0)
    with pytest.raises(ValueError):
        bernoulli_kl(1.5, 0.5)


def test_lower_bound_forms_and_errors(fig1):
    two = validate_instance(2, 3, [0.3, 0.2], [[0.6, 0.5, 0.1], [0.2, 0.1, 0.5]])
    assert late_stage_lb(two, 0.5, 10, "average") == pytest.approx(
        0.2 / 8 * d_mu(two) * 0.5 * 2 / 10)
    assert late_stage_lb(two, 0.5, 10, "per_queue") == pytest.approx(
        0.2 / 8 * d_mu(two) * 0.5 * max(1, 2) / 10)
    with pytest.raises(ValueError):
        late_stage_lb(two, 0.5, 10, "single")
    with pytest.raises(ValueError):
        late_stage_lb(fig1, 1.0, 10)
    with pytest.raises(ValueError):
        early_stage_lb(fig1, 0.5, 1.5, 100)
    wide = validate_instance(1, 2, [0.3], [[0.9, 0.1]])
    with pytest.raises(WindowEmpty):
        early_stage_lb(wide, 0.5, 2.5, 100)


def test_late_stage_lb_scales_as_inverse_t(fig1):
    assert late_stage_lb(fig1, 0.3, 10) == pytest.approx(100 * late_stage_lb(fig1, 0.3, 1000))


def test_ths_terms_invalid_at_desk_scale(fig1):
    x = ths_upper_terms(fig1, 2e5)
    assert not x.valid and not x.corollary_valid
    assert x.log_w == pytest.approx((2 * math.log(2e5) / 0.17) ** (2 / 3))
    assert x.corollary_bound == pytest.approx(corollary_upper(5, 0.1, 2e5))


def test_ths_terms_valid_eventually():
    easy = validate_instance(1, 2, [0.1], [[0.95, 0.05]])
    x = ths_upper_terms(easy, 1e12)
    assert x.valid and all(x.conditions.values())


def test_bound_curves_csv(fig1, tmp_path):
    times = np.array([1, 2, 3, 10, 100, 1000])
    curves = bound_curves(fig1, times)
    assert [c.name for c in curves] == ["late_stage_lb", "early_stage_lb", "qths_upper",
                                        "qths_corollary_upper", "early_stage_heuristic_ub"]
    p = tmp_path / "b.csv"
    write_bounds_csv(curves, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "t,bound_name,value,valid_flag"
    assert len(rows) - 1 == sum(len(c.t) for c in curves)
