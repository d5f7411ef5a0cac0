"""Acceptance suites shared by ``qbandit verify`` and the test-suite.

Each check returns a :class:`CheckResult`; budgets (episodes, horizons) are
keyword arguments whose defaults are the full acceptance sizes.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .analysis import loglog_slope, peak_time
from .bounds import bernoulli_kl, d_mu, early_stage_window_right, explore_count_bound, explore_mean_bound
from .core import ProblemInstance, validate_instance
from .matching import hamming, min_hamming_bruteforce, project_to_matching
from .policies import PolicyKind
from .sim import (Z95, SimConfig, dominance_violations, estimate_regret, regen_cycle_margins,
                  run_episode, sample_stationary_queue, stationary_mean, stationary_pmf,
                  suboptimal_bound_check)

FIG1_MU = (0.65, 0.48, 0.40, 0.30, 0.20)
FIG1_LAMBDA = 0.55


def fig1_instance(lam: float = FIG1_LAMBDA) -> ProblemInstance:
    return validate_instance(1, 5, [lam], [list(FIG1_MU)])


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} [{self.number:2d}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(number, name, bool(ok), detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------

def check_stationary(draws: int = 100_000, seed: int = 11) -> CheckResult:
    """Empirical pmf of the stationary sampler against the analytic law (lambda=0.55, mu*=0.65)."""
    def run():
        rng = np.random.default_rng(seed)
        x = sample_stationary_queue(0.55, 0.65, rng, size=draws, same_slot=False)
        support = np.arange(x.max() + 1)
        emp = np.bincount(x, minlength=len(support)) / draws
        pmf = stationary_pmf(0.55, 0.65, support, same_slot=False)
        tv = 0.5 * (np.abs(emp - pmf).sum() + (1.0 - pmf.sum()))
        return tv < 0.01, f"TV={tv:.5f} (< 0.01), P[Q=0]={pmf[0]:.6f}"
    return _timed(1, "stationary", run)


def check_genie(episodes: int = 2000, horizon: int = 10_000, seed: int = 12, workers=None) -> CheckResult:
    """Genie queue mean stays at the analytic stationary mean at 20 checkpoints."""
    def run():
        inst = fig1_instance()
        pts = tuple(int(t) for t in np.unique(np.round(np.logspace(0, math.log10(horizon), 20))))
        cfg = SimConfig(inst, PolicyKind("genie"), horizon, episodes, master_seed=seed, per_decade=1,
                        extra_times=pts, table_times=())
        s = estimate_regret(cfg, workers)
        target = stationary_mean(FIG1_LAMBDA, FIG1_MU[0], same_slot=True)
        idx = [s.index_of(t) for t in pts]
        z = np.abs(s.genie_mean[idx, 0] - target) / s.genie_half_width[idx, 0]
        return bool(np.all(z < 3.0)), f"{len(pts)} checkpoints, max deviation {z.max():.2f} half-widths (< 3)"
    return _timed(2, "genie", run)


def _qths_traces(episodes: int, horizon: int, seed: int):
    cfg = SimConfig(fig1_instance(), PolicyKind("qths"), horizon, episodes, master_seed=seed)
    for e in range(episodes):
        yield run_episode(cfg, e)


def check_dominance(episodes: int = 1000, horizon: int = 10_000, seed: int = 13) -> CheckResult:
    """Zero slots with genie queue above bandit queue under the common-uniform coupling."""
    def run():
        bad = sum(dominance_violations(tr) for tr in _qths_traces(episodes, horizon, seed))
        return bad == 0, f"{bad} violating slots in {episodes} x {horizon}"
    return _timed(3, "dominance", run)


def check_regen(episodes: int = 1000, horizon: int = 10_000, seed: int = 14) -> CheckResult:
    """Regenerative-cycle inequality at every slot of every episode."""
    def run():
        bad = 0
        worst = np.inf
        for tr in _qths_traces(episodes, horizon, seed):
            m = regen_cycle_margins(tr, 0)
            bad += int(np.count_nonzero(m < 0))
            worst = min(worst, int(m.min()))
        return bad == 0, f"{bad} violating slots, minimum slack {worst}"
    return _timed(4, "regen_cycle", run)


@lru_cache(maxsize=4)
def fig1_series(episodes: int = 2000, horizon: int = 200_000, seed: int = 1, workers=None):
    cfg = SimConfig(fig1_instance(), PolicyKind("qths", 3.0), horizon, episodes, master_seed=seed)
    return estimate_regret(cfg, workers)


def check_phase(episodes: int = 2000, horizon: int = 200_000, seed: int = 1, workers=None) -> CheckResult:
    """Smoothed regret peaks inside [1e2, 5e4] and falls below 0.3 of the peak by the horizon."""
    def run():
        s = fig1_series(episodes, horizon, seed, workers)
        t_star, peak = peak_time(s.times, s.psi[:, 0])
        end = float(s.psi[-1, 0])
        ok = 100 <= t_star <= 50_000 and end < 0.3 * peak
        return ok, (f"t*={t_star}, smoothed peak={peak:.4f}, psi({horizon})={end:.4f} "
                    f"(ratio {end / peak:.3f} < 0.3)")
    return _timed(5, "phase_transition", run)


def check_decay(episodes: int = 2000, horizon: int = 200_000, seed: int = 1, workers=None) -> CheckResult:
    """Log-log slope of the late-stage regret lies in [-1.7, -0.3]."""
    def run():
        s = fig1_series(episodes, horizon, seed, workers)
        t_star, _ = peak_time(s.times, s.psi[:, 0])
        fit = loglog_slope(s.times, s.psi[:, 0], 4 * t_star, horizon)
        ok = -1.7 <= fit.slope <= -0.3
        return ok, (f"slope {fit.slope:.3f} on [{4 * t_star}, {horizon}] "
                    f"({fit.points} points, {fit.dropped} non-positive dropped)")
    return _timed(6, "late_decay", run)


def check_peak_shift(eps=(0.05, 0.1, 0.15), episodes: int = 500, horizon: int = 200_000, seed: int = 2,
                     workers=None) -> CheckResult:
    """Smoothed peak times strictly decrease as eps grows (K=5, lambda = mu* - eps)."""
    def run():
        peaks = []
        for e in eps:
            inst = fig1_instance(round(FIG1_MU[0] - e, 12))
            cfg = SimConfig(inst, PolicyKind("qths", 3.0), horizon, episodes, master_seed=seed)
            s = estimate_regret(cfg, workers)
            peaks.append(peak_time(s.times, s.psi[:, 0])[0])
        ok = all(a > b for a, b in zip(peaks, peaks[1:]))
        return ok, "peak times " + ", ".join(f"eps={e:g}: {p}" for e, p in zip(eps, peaks))
    return _timed(7, "peak_shift", run)


def check_projection(random_cases: int = 10_000, seed: int = 18) -> CheckResult:
    """Projection distance equals the brute-force minimum (exhaustive to size 4, random to 8)."""
    def run():
        bad = n = 0
        for K in range(1, 5):
            for U in range(1, K + 1):
                for khat in itertools.product(range(K), repeat=U):
                    m = project_to_matching(khat, U, K)
                    n += 1
                    bad += len(set(m)) != U or hamming(m, khat) != min_hamming_bruteforce(khat, U, K)
        exhaustive = n
        rng = np.random.default_rng(seed)
        for _ in range(random_cases):
            K = int(rng.integers(1, 9))
            U = int(rng.integers(1, K + 1))
            khat = rng.integers(0, K, size=U)
            m = project_to_matching(khat, U, K)
            n += 1
            bad += len(set(m)) != U or hamming(m, khat) != min_hamming_bruteforce(khat, U, K)
        return bad == 0, f"{bad} mismatches in {exhaustive} exhaustive + {random_cases} random cases"
    return _timed(8, "projection", run)


EXPLORE_WINDOWS = ((1, 1000), (10, 1000), (100, 1000), (500, 1000), (900, 1000), (990, 1000))


def check_explore(episodes: int = 1000, trials: int = 10_000, seed: int = 19) -> CheckResult:
    """Mean explore count in (1e3, 1e4] and the tail threshold at t = 1e3."""
    def run():
        K = 5
        t1, t2 = 1000, 10_000
        counts = np.array([int(tr.explored[t1:t2].sum()) for tr in _qths_traces(episodes, t2, seed)])
        mean = counts.mean()
        hw = Z95 * counts.std(ddof=1) / math.sqrt(episodes)
        cap = explore_mean_bound(t1, t2, K)
        ok_mean = mean <= cap + 3 * hw
        worst = -np.inf
        exceed = 0
        thresholds = [explore_count_bound(a, b, K, 1000) for a, b in EXPLORE_WINDOWS]
        for tr in _qths_traces(trials, 1000, seed + 1):
            csum = np.concatenate([[0], np.cumsum(tr.explored)])
            for (a, b), thr in zip(EXPLORE_WINDOWS, thresholds):
                c = csum[b] - csum[a]
                exceed += c > thr
                worst = max(worst, c / thr)
        ok = ok_mean and exceed == 0
        return ok, (f"mean {mean:.1f} +- {hw:.1f} vs bound {cap:.1f}; tail threshold exceeded "
                    f"{exceed} times in {trials} trials x {len(EXPLORE_WINDOWS)} windows "
                    f"(max count/threshold {worst:.3f})")
    return _timed(9, "explore_accounting", run)


def check_golden() -> CheckResult:
    """Closed-form bound constants against independently computed values."""
    def run():
        inst = fig1_instance()
        got = {"kl(0.25,0.75)": (bernoulli_kl(0.25, 0.75), 0.549306, 1e-6),
               "D(mu)": (d_mu(inst), 0.182315, 1e-6),
               "early right end": (early_stage_window_right(inst), 3.6463, 1e-4)}
        ok = all(abs(v - ref) <= tol for v, ref, tol in got.values())
        return ok, ", ".join(f"{k}={v:.7f}" for k, (v, _, _) in got.items())
    return _timed(10, "golden_values", run)


def check_lemma9(episodes: int = 2000, horizon: int = 10_000, seed: int = 21, workers=None) -> CheckResult:
    """Regret against sum_k gap_k E[T_k] - eps t for Q-ThS and uniform scheduling."""
    def run():
        inst = fig1_instance()
        times = (100, 1000, 10_000)
        parts, ok = [], True
        for name in ("qths", "uniform"):
            cfg = SimConfig(inst, PolicyKind(name), horizon, episodes, master_seed=seed,
                            per_decade=1, table_times=times)
            s = estimate_regret(cfg, workers)
            for t in times:
                b = suboptimal_bound_check(s, inst, t)
                ok &= b.holds
                parts.append(f"{name}@{t}: {b.lhs:.2f} vs {b.rhs:.2f}-2*{b.half_width:.2f}")
        return ok, "; ".join(parts)
    return _timed(11, "suboptimal_bound", run)


SUITES: dict[str, Callable[..., CheckResult]] = {
    "stationary": check_stationary,
    "genie": check_genie,
    "dominance": check_dominance,
    "regen": check_regen,
    "phase": check_phase,
    "decay": check_decay,
    "peakshift": check_peak_shift,
    "projection": check_projection,
    "explore": check_explore,
    "golden": check_golden,
    "lemma9": check_lemma9,
}
GROUPS = {
    "quick": ("stationary", "projection", "golden"),
    "all": tuple(SUITES),
}
_TAKES_WORKERS = {"genie", "phase", "decay", "peakshift", "lemma9"}


def run_suite(name: str, workers: int | None = None) -> list[CheckResult]:
    names = GROUPS.get(name, (name,))
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + sorted(GROUPS)}")
    return [SUITES[n](workers=workers) if n in _TAKES_WORKERS else SUITES[n]() for n in names]


__all__ = ["CheckResult", "SUITES", "GROUPS", "run_suite", "fig1_instance", "fig1_series"]
