"""Problem instances, queue dynamics and the per-slot trace record.

Server and queue indices are 0-based throughout the package.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np


class InstanceError(ValueError):
    """Base class for rejected problem instances.

    ``index`` locates the offending entry: a queue index, a ``(queue, server)``
    pair, or ``None`` when the problem is global (e.g. wrong dimensions).
    """

    def __init__(self, message: str, index: Any = None):
        super().__init__(message)
        self.index = index


class ShapeMismatch(InstanceError):
    pass


class RateOutOfRange(InstanceError):
    pass


class NonUniqueOptimum(InstanceError):
    pass


class OptimaNotMatching(InstanceError):
    pass


class Unstable(InstanceError):
    pass


@dataclass(frozen=True)
class DerivedParams:
    k_star: np.ndarray      # (U,) optimal server per queue
    mu_star: np.ndarray     # (U,)
    eps: np.ndarray         # (U,) mu_star - lambda
    delta_uk: np.ndarray    # (U, K) mu_star[u] - mu[u, k]
    delta: float            # min gap over suboptimal links
    mu_min: float
    mu_max: float
    lambda_min: float
    eps_bar: float


@dataclass(frozen=True)
class ProblemInstance:
    U: int
    K: int
    lam: np.ndarray   # (U,)
    mu: np.ndarray    # (U, K)
    derived: DerivedParams = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "U": self.U,
            "K": self.K,
            "lambda": [float(x) for x in self.lam],
            "mu": [[float(x) for x in row] for row in self.mu],
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (self.U, self.K) == (other.U, other.K) and np.array_equal(
            self.lam, other.lam) and np.array_equal(self.mu, other.mu)

    def __hash__(self) -> int:
        return hash((self.U, self.K, self.lam.tobytes(), self.mu.tobytes()))


def validate_instance(U: int, K: int, lam: Sequence[float] | float,
                      mu: Sequence[Sequence[float]] | Sequence[float]) -> ProblemInstance:
    """Check an instance and attach its derived parameters.

    Checks run in a fixed order (shape, rate range, unique optimum per row,
    optima forming a matching, stability) and the first failure is raised, so
    every input maps to exactly one outcome.  A flat ``mu`` with ``U == 1`` is
    accepted as the single row.
    """
    if isinstance(U, bool) or isinstance(K, bool) or int(U) != U or int(K) != K:
        raise ShapeMismatch(f"U and K must be integers, got U={U!r}, K={K!r}")
    U, K = int(U), int(K)
    if U < 1 or K < 1:
        raise ShapeMismatch(f"need U >= 1 and K >= 1, got U={U}, K={K}")
    if U > K:
        raise ShapeMismatch(f"need U <= K, got U={U}, K={K}")

    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    mu_arr = np.asarray(mu, dtype=float)
    if mu_arr.ndim == 1 and U == 1:
        mu_arr = mu_arr[None, :]
    if lam_arr.shape != (U,):
        raise ShapeMismatch(f"lambda must have {U} entries, got shape {lam_arr.shape}")
    if mu_arr.shape != (U, K):
        raise ShapeMismatch(f"mu must be {U}x{K}, got shape {mu_arr.shape}")

    for u in range(U):
        if not (0.0 < lam_arr[u] < 1.0):
            raise RateOutOfRange(f"lambda[{u}] = {lam_arr[u]} not in (0, 1)", u)
    for u in range(U):
        for k in range(K):
            if not (0.0 < mu_arr[u, k] < 1.0):
                raise RateOutOfRange(f"mu[{u}][{k}] = {mu_arr[u, k]} not in (0, 1)", (u, k))

    k_star = np.empty(U, dtype=np.int64)
    for u in range(U):
        row = mu_arr[u]
        best = np.flatnonzero(row == row.max())
        if best.size > 1:
            raise NonUniqueOptimum(
                f"queue {u} has tied optimal servers {best.tolist()}", u)
        k_star[u] = best[0]

    owner: dict[int, int] = {}
    for u in range(U):
        k = int(k_star[u])
        if k in owner:
            raise OptimaNotMatching(
                f"queues {owner[k]} and {u} share optimal server {k}", (owner[k], u))
        owner[k] = u

    mu_star = mu_arr[np.arange(U), k_star]
    eps = mu_star - lam_arr
    for u in range(U):
        if eps[u] <= 0:
            raise Unstable(
                f"queue {u}: lambda={lam_arr[u]} >= mu*={mu_star[u]} (eps={eps[u]:.6g})", u)

    delta_uk = mu_star[:, None] - mu_arr
    if K > 1:
        mask = np.ones((U, K), dtype=bool)
        mask[np.arange(U), k_star] = False
        delta = float(delta_uk[mask].min())
    else:
        delta = math.inf

    lam_arr.setflags(write=False)
    mu_arr.setflags(write=False)
    derived = DerivedParams(
        k_star=k_star,
        mu_star=mu_star,
        eps=eps,
        delta_uk=delta_uk,
        delta=delta,
        mu_min=float(mu_arr.min()),
        mu_max=float(mu_arr.max()),
        lambda_min=float(lam_arr.min()),
        eps_bar=float(eps.mean()),
    )
    for arr in (k_star, mu_star, eps, delta_uk):
        arr.setflags(write=False)
    return ProblemInstance(U=U, K=K, lam=lam_arr, mu=mu_arr, derived=derived)


def instance_from_dict(data: Mapping[str, Any]) -> ProblemInstance:
    """Build an instance from the JSON object ``{"U", "K", "lambda", "mu"}``."""
    allowed = {"U", "K", "lambda", "mu"}
    unknown = set(data) - allowed
    if unknown:
        raise ShapeMismatch(f"unknown instance keys: {sorted(unknown)}")
    missing = allowed - set(data)
    if missing:
        raise ShapeMismatch(f"missing instance keys: {sorted(missing)}")
    return validate_instance(data["U"], data["K"], data["lambda"], data["mu"])


def load_instance(path: str | Path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def lindley_step(q: int, a: int, s: int) -> int:
    """One slot of ``Q(t) = (Q(t-1) + A(t) - S(t))^+``.

    A job arriving to an empty queue can be served in the same slot.
    """
    return max(q + a - s, 0)


def serve_first_step(q: int, a: int, s: int) -> int:
    """Alternative ordering ``Q(t) = (Q(t-1) - S(t))^+ + A(t)``: service
    only reaches jobs present at the start of the slot."""
    return max(q - s, 0) + a


@dataclass(frozen=True)
class TraceRecord:
    t: int
    schedule: tuple[int, ...]
    explored: bool
    arrivals: tuple[bool, ...]
    services: tuple[bool, ...]
    bandit_q: tuple[int, ...]
    genie_q: tuple[int, ...]
