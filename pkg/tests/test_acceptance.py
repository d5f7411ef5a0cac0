"""The eleven acceptance criteria at full size; one PASS/FAIL line each.

The figure-scale runs (criteria 5 to 7) take a few minutes on one core.
Lines are printed as each check finishes and repeated in the terminal summary.
"""
import os

import pytest

from qbandit import checks

WORKERS = os.cpu_count() or 1
RESULTS: list = []


def _record(result):
    RESULTS.append(result)
    print("\n" + result.line())
    assert result.passed, result.line()


def test_01_stationary_sampler():
    _record(checks.check_stationary())


def test_02_genie_stationarity():
    _record(checks.check_genie(workers=WORKERS))


def test_03_coupling_dominance():
    _record(checks.check_dominance())


def test_04_regenerative_cycle():
    _record(checks.check_regen())


@pytest.mark.slow
def test_05_phase_transition():
    _record(checks.check_phase(workers=WORKERS))


@pytest.mark.slow
def test_06_late_stage_decay():
    _record(checks.check_decay(workers=WORKERS))


@pytest.mark.slow
def test_07_peak_shift_with_load():
    _record(checks.check_peak_shift(workers=WORKERS))


def test_08_projection_oracle():
    _record(checks.check_projection())


def test_09_exploration_accounting():
    _record(checks.check_explore())


def test_10_bound_golden_values():
    _record(checks.check_golden())


def test_11_suboptimal_schedule_inequality():
    _record(checks.check_lemma9(workers=WORKERS))
