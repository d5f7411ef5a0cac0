"""Scheduling policies as pure state machines over per-link count statistics.

A policy's randomness (explore gate, choice of exploration matching, Thompson
draws) all comes from a single generator passed in by the caller.  The gate
draw is skipped whenever the explore probability is exactly 0 or 1, so Q-ThS
with ``explore_const=0`` consumes its stream exactly like plain Thompson
sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .core import ProblemInstance
from .matching import _project_inplace

GENIE, QTHS, THOMPSON, UCB1, QUCB, UNIFORM = range(6)

_CODES = {"genie": GENIE, "qths": QTHS, "thompson": THOMPSON, "ucb1": UCB1,
          "qucb": QUCB, "uniform": UNIFORM}
_GATED = {"qths", "qucb"}

DEFAULT_EXPLORE_CONST = 3.0
TUNED_EXPLORE_CONST = 0.4


class UnsampledArm(ValueError):
    pass


@dataclass(frozen=True)
class PolicyKind:
    """Policy name plus its exploration constant (used by the gated policies only).

    ``uniform`` schedules a uniformly random member of the exploration set
    every slot; it is a reference policy for regret diagnostics.
    """

    name: str
    explore_const: float = DEFAULT_EXPLORE_CONST

    def __post_init__(self):
        if self.name not in _CODES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {sorted(_CODES)}")
        if self.name in _GATED and not self.explore_const >= 0:
            raise ValueError(f"explore_const must be >= 0, got {self.explore_const}")

    @property
    def code(self) -> int:
        return _CODES[self.name]

    @property
    def label(self) -> str:
        if self.name in _GATED:
            return f"{self.name}_c{self.explore_const:g}"
        return self.name

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyKind":
        return cls(data["policy"], float(data.get("explore_const", DEFAULT_EXPLORE_CONST)))

    def to_dict(self) -> dict:
        return {"policy": self.name, "explore_const": self.explore_const}


@dataclass(frozen=True)
class CountStats:
    T: np.ndarray  # (U, K) assignment counts
    S: np.ndarray  # (U, K) observed successes

    @classmethod
    def empty(cls, U: int, K: int) -> "CountStats":
        return cls(np.zeros((U, K), dtype=np.int64), np.zeros((U, K), dtype=np.int64))

    @property
    def mu_hat(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.T > 0, self.S / np.maximum(self.T, 1), np.nan)


@njit(cache=True, nogil=True)
def _explore_probability(t, K, c):
    lt = math.log(t)
    p = c * K * lt * lt / t
    return 1.0 if p > 1.0 else p


def explore_probability(t: int, K: int, c: float = DEFAULT_EXPLORE_CONST) -> float:
    """min{1, c K (ln t)^2 / t}."""
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    return _explore_probability(float(t), K, float(c))


def thompson_sample(successes: int, trials: int, rng: np.random.Generator) -> float:
    if not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials, got {successes}, {trials}")
    return rng.beta(successes + 1.0, trials - successes + 1.0)


@njit(cache=True, nogil=True)
def _ucb_index(successes, trials, t):
    return successes / trials + math.sqrt(2.0 * math.log(t) / trials)


def ucb_index(successes: int, trials: int, t: float) -> float:
    """UCB-1 index S/T + sqrt(2 ln t / T)."""
    if trials < 1:
        raise UnsampledArm("UCB index undefined for an arm with no trials")
    return _ucb_index(float(successes), float(trials), float(t))


@njit(cache=True, nogil=True)
def _decide(code, c, T, S, k_star, t, rng, out, khat, taken):
    """Fill ``out`` with the slot-t matching; return 1 if explored, 0 if not,
    -1 if a UCB index hit an unsampled link."""
    U, K = T.shape
    if code == GENIE:
        for u in range(U):
            out[u] = k_star[u]
        return 0
    if code == UNIFORM:
        j = int(rng.random() * K)
        for u in range(U):
            out[u] = (u + j) % K
        return 1
    ucb = code == UCB1 or code == QUCB
    if ucb and t <= K:
        # cold start: walk the exploration set once so every link has a trial
        for u in range(U):
            out[u] = (u + t - 1) % K
        return 0
    if code == QTHS or code == QUCB:
        p = _explore_probability(float(t), K, c)
        fire = p >= 1.0
        if not fire and p > 0.0:
            fire = rng.random() < p
        if fire:
            j = int(rng.random() * K)
            for u in range(U):
                out[u] = (u + j) % K
            return 1
    for u in range(U):
        best = -1.0
        arg = 0
        for k in range(K):
            if ucb:
                if T[u, k] == 0:
                    return -1
                v = _ucb_index(float(S[u, k]), float(T[u, k]), float(t))
            else:
                v = rng.beta(S[u, k] + 1.0, T[u, k] - S[u, k] + 1.0)
            if v > best:
                best = v
                arg = k
        khat[u] = arg
    _project_inplace(khat, K, out, taken)
    return 0


def policy_decide(kind: PolicyKind, stats: CountStats, inst: ProblemInstance, t: int,
                  rng: np.random.Generator) -> tuple[tuple[int, ...], bool]:
    """Matching for slot ``t`` and whether it came from the explore branch."""
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    U, K = inst.U, inst.K
    out = np.empty(U, dtype=np.int64)
    flag = _decide(kind.code, float(kind.explore_const), stats.T, stats.S,
                   inst.derived.k_star, t, rng, out,
                   np.empty(U, dtype=np.int64), np.empty(K, dtype=np.bool_))
    if flag < 0:
        raise UnsampledArm(f"UCB index needs every link sampled; slot {t}")
    return tuple(int(k) for k in out), bool(flag)


def policy_update(stats: CountStats, schedule: Sequence[int], services: Sequence[bool | int]) -> CountStats:
    """Bandit feedback: only the scheduled links' counts move."""
    T = stats.T.copy()
    S = stats.S.copy()
    for u, k in enumerate(schedule):
        T[u, k] += 1
        S[u, k] += int(bool(services[u]))
    return CountStats(T, S)
