"""Exploration matching set and Hamming projection onto matchings."""
from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment

BRUTEFORCE_MAX_K = 8


class SizeTooLarge(ValueError):
    pass


def exploration_matchings(U: int, K: int) -> list[tuple[int, ...]]:
    """The K cyclic-shift matchings; member j assigns queue u to (u + j) mod K.

    Together they cover every (queue, server) link exactly once.
    """
    if not 1 <= U <= K:
        raise ValueError(f"need 1 <= U <= K, got U={U}, K={K}")
    return [tuple((u + j) % K for u in range(U)) for j in range(K)]


@njit(cache=True, nogil=True)
def _project_inplace(khat, K, out, taken):
    U = khat.shape[0]
    for k in range(K):
        taken[k] = False
    unresolved = 0
    for u in range(U):
        k = khat[u]
        if not taken[k]:
            taken[k] = True
            out[u] = k
        else:
            out[u] = -1
            unresolved += 1
    if unresolved:
        k = 0
        for u in range(U):
            if out[u] < 0:
                while taken[k]:
                    k += 1
                taken[k] = True
                out[u] = k


def project_to_matching(khat: Sequence[int], U: int, K: int, *, check: bool = False) -> tuple[int, ...]:
    """Nearest matching to the favourite-server vector ``khat`` in Hamming distance.

    Each queue in index order keeps its favourite if still free, then the
    leftover queues take the free servers in ascending order.  Every distinct
    favourite is kept by exactly one queue, which is the most any matching can
    keep, so the result is a minimiser.  ``check=True`` confirms this against
    an assignment solver.
    """
    kh = np.asarray(khat, dtype=np.int64)
    if kh.shape != (U,) or U > K:
        raise ValueError(f"khat must have {U} entries with U <= K")
    if kh.size and (kh.min() < 0 or kh.max() >= K):
        raise ValueError(f"khat entries must lie in [0, {K})")
    out = np.empty(U, dtype=np.int64)
    _project_inplace(kh, K, out, np.empty(K, dtype=np.bool_))
    result = tuple(int(k) for k in out)
    if check:
        best = min_hamming_assignment(kh, U, K)
        got = hamming(result, kh)
        if got != best:
            raise AssertionError(f"projection distance {got} exceeds optimum {best} for khat={kh.tolist()}")
    return result


def hamming(assign: Sequence[int], khat: Sequence[int]) -> int:
    return int(np.count_nonzero(np.asarray(assign) != np.asarray(khat)))


@lru_cache(maxsize=None)
def _all_matchings(U: int, K: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(K), U)), dtype=np.int64).reshape(-1, U)


def min_hamming_bruteforce(khat: Sequence[int], U: int, K: int) -> int:
    """Exact minimum Hamming distance over all K!/(K-U)! matchings."""
    if K > BRUTEFORCE_MAX_K:
        raise SizeTooLarge(f"enumeration limited to K <= {BRUTEFORCE_MAX_K}, got K={K}")
    if not 1 <= U <= K:
        raise ValueError(f"need 1 <= U <= K, got U={U}, K={K}")
    perms = _all_matchings(U, K)
    kh = np.asarray(khat, dtype=np.int64)
    return int((perms != kh).sum(axis=1).min())


def min_hamming_assignment(khat: Sequence[int], U: int, K: int) -> int:
    """Minimum Hamming distance via a rectangular assignment solve (0/1 costs)."""
    kh = np.asarray(khat, dtype=np.int64)
    cost = np.ones((U, K))
    cost[np.arange(U), kh] = 0.0
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum())
