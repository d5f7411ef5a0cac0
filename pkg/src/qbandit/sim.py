"""Coupled Monte Carlo engine: a bandit system and a genie system driven by
shared arrivals and shared service randomness.

Random streams
--------------
Every episode owns independent generators derived from
``SeedSequence([master_seed, episode_index, tag])`` with the fixed tags in
``STREAM_TAGS`` (initial state, arrivals, services, policy).  Results
therefore do not depend on how episodes are distributed over workers.
Across-episode aggregates are exact integer sums, so the reduction is
order-free and repeated runs are byte-identical.
"""
from __future__ import annotations

import enum
import json
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, NamedTuple

import numpy as np
from numba import njit

from .core import ProblemInstance, TraceRecord, Unstable
from .policies import PolicyKind, _decide

Z95 = NormalDist().inv_cdf(0.975)
STREAM_TAGS = {"init": 0, "arrivals": 1, "services": 2, "policy": 3}
WORKERS_ENV = "QBANDIT_WORKERS"
CHUNK = 32


class CouplingMode(str, enum.Enum):
    """How service outcomes are drawn each slot.

    COMMON_UNIFORM: one uniform V_u per queue, link (u, k) succeeds iff
    V_u < mu[u, k].  INDEPENDENT: every link gets its own uniform.  Both
    systems read the same draws for whatever links they schedule.
    """

    COMMON_UNIFORM = "common_uniform"
    INDEPENDENT = "independent"


# ---------------------------------------------------------------------------
# stationary law of the genie queue

def stationary_params(lam: float, mu_star: float, same_slot: bool = True) -> tuple[float, float]:
    """``(P[Q > 0], rho)`` of the stationary genie queue.

    For ``j >= 1``, ``P[Q = j] = P[Q > 0] (1 - rho) rho^(j-1)`` with
    ``rho = lam (1 - mu*) / ((1 - lam) mu*)``.  Under same-slot service
    ``P[Q > 0] = rho``; when service only reaches jobs already waiting it is
    ``lam / mu*``.  The second law is also the distribution of the content
    ``Q(t-1) + A(t)`` seen by the server in the same-slot model.
    """
    if not 0.0 < lam < mu_star < 1.0:
        raise Unstable(f"need 0 < lambda < mu* < 1, got lambda={lam}, mu*={mu_star}")
    rho = lam * (1.0 - mu_star) / ((1.0 - lam) * mu_star)
    return (rho if same_slot else lam / mu_star), rho


def stationary_pmf(lam: float, mu_star: float, j: int | np.ndarray, same_slot: bool = True):
    p_pos, rho = stationary_params(lam, mu_star, same_slot)
    j = np.asarray(j)
    out = np.where(j == 0, 1.0 - p_pos, p_pos * (1.0 - rho) * rho ** np.maximum(j - 1, 0))
    return out if out.ndim else float(out)


def stationary_mean(lam: float, mu_star: float, same_slot: bool = True) -> float:
    p_pos, rho = stationary_params(lam, mu_star, same_slot)
    return p_pos / (1.0 - rho)


@njit(cache=True, nogil=True)
def _draw_stationary(p_pos, rho, rng):
    if rng.random() >= p_pos:
        return 0
    # geometric on {1, 2, ...}; 1 - U lies in (0, 1]
    return 1 + int(math.floor(math.log(1.0 - rng.random()) / math.log(rho)))


@njit(cache=True, nogil=True)
def _draw_stationary_many(p_pos, rho, rng, out):
    for i in range(out.shape[0]):
        out[i] = _draw_stationary(p_pos, rho, rng)


def sample_stationary_queue(lam: float, mu_star: float, rng: np.random.Generator,
                            size: int | None = None, same_slot: bool = True):
    """Draw from the stationary genie queue law (see ``stationary_params``)."""
    p_pos, rho = stationary_params(lam, mu_star, same_slot)
    out = np.empty(1 if size is None else size, dtype=np.int64)
    _draw_stationary_many(p_pos, rho, rng, out)
    return int(out[0]) if size is None else out


# ---------------------------------------------------------------------------
# configuration

def checkpoint_grid(horizon: int, per_decade: int = 200, extra: Iterable[int] = ()) -> np.ndarray:
    """Geometric grid of slots in ``[1, horizon]`` with ``horizon`` included."""
    n = max(2, int(math.ceil(per_decade * math.log10(max(horizon, 10)))) + 1)
    grid = np.round(np.logspace(0.0, math.log10(horizon), n)).astype(np.int64)
    extra = np.asarray([t for t in extra if 1 <= t <= horizon], dtype=np.int64)
    return np.unique(np.concatenate([grid, extra, [horizon]]))


def decade_times(horizon: int) -> list[int]:
    out = [10 ** p for p in range(1, 19) if 10 ** p <= horizon]
    return out + ([horizon] if horizon not in out else [])


@dataclass(frozen=True)
class SimConfig:
    instance: ProblemInstance
    policy: PolicyKind
    horizon: int
    episodes: int
    coupling: CouplingMode = CouplingMode.COMMON_UNIFORM
    master_seed: int = 0
    record_every: int | None = None   # fixed stride; None selects the geometric grid
    per_decade: int = 200
    extra_times: tuple[int, ...] = ()
    table_times: tuple[int, ...] | None = None  # None selects decades + horizon
    same_slot_service: bool = True
    shared_init: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "coupling", CouplingMode(self.coupling))

    @property
    def tables(self) -> np.ndarray:
        times = decade_times(self.horizon) if self.table_times is None else self.table_times
        return np.unique(np.asarray([t for t in times if 1 <= t <= self.horizon], dtype=np.int64))

    @property
    def record_times(self) -> np.ndarray:
        extra = tuple(self.extra_times) + tuple(int(t) for t in self.tables)
        if self.record_every is None:
            return checkpoint_grid(self.horizon, self.per_decade, extra)
        base = np.arange(self.record_every, self.horizon + 1, self.record_every)
        return np.unique(np.concatenate([base, np.asarray(extra, dtype=np.int64), [self.horizon]]))

    def to_dict(self) -> dict:
        return {
            "instance": self.instance.to_dict(),
            "policy": self.policy.to_dict(),
            "horizon": self.horizon,
            "episodes": self.episodes,
            "coupling": self.coupling.value,
            "master_seed": self.master_seed,
            "record_every": self.record_every,
            "per_decade": self.per_decade,
            "extra_times": list(self.extra_times),
            "table_times": [int(t) for t in self.tables],
            "same_slot_service": self.same_slot_service,
            "shared_init": self.shared_init,
        }


def episode_streams(master_seed: int, episode: int) -> dict[str, np.random.Generator]:
    return {name: np.random.Generator(np.random.PCG64(np.random.SeedSequence([master_seed, episode, tag])))
            for name, tag in STREAM_TAGS.items()}


# ---------------------------------------------------------------------------
# episode kernel

@njit(cache=True, nogil=True)
def _episode(code, c, lam, mu, k_star, p_pos, rho, horizon, common, same_slot, shared_init,
             init_rng, arr_rng, svc_rng, pol_rng,
             rec_times, tab_times, rec_d, rec_b, rec_g, rec_age, rec_expl, tab_T,
             full, tr_sched, tr_expl, tr_arr, tr_svc, tr_b, tr_g, q0):
    U, K = mu.shape
    T = np.zeros((U, K), dtype=np.int64)
    S = np.zeros((U, K), dtype=np.int64)
    bq = np.empty(U, dtype=np.int64)
    gq = np.empty(U, dtype=np.int64)
    for u in range(U):
        bq[u] = _draw_stationary(p_pos[u], rho[u], init_rng)
        gq[u] = bq[u] if shared_init else _draw_stationary(p_pos[u], rho[u], init_rng)
        q0[0, u] = bq[u]
        q0[1, u] = gq[u]
    last_zero = np.zeros(U, dtype=np.int64)
    sched = np.empty(U, dtype=np.int64)
    khat = np.empty(U, dtype=np.int64)
    taken = np.empty(K, dtype=np.bool_)
    arr = np.empty(U, dtype=np.int64)
    sb = np.empty(U, dtype=np.int64)
    sg = np.empty(U, dtype=np.int64)
    n_rec = rec_times.shape[0]
    n_tab = tab_times.shape[0]
    ri = 0
    ti = 0
    explored_total = 0
    for t in range(1, horizon + 1):
        explored = _decide(code, c, T, S, k_star, t, pol_rng, sched, khat, taken)
        for u in range(U):
            arr[u] = 1 if arr_rng.random() < lam[u] else 0
        if common:
            for u in range(U):
                v = svc_rng.random()
                sb[u] = 1 if v < mu[u, sched[u]] else 0
                sg[u] = 1 if v < mu[u, k_star[u]] else 0
        else:
            for u in range(U):
                for k in range(K):
                    r = 1 if svc_rng.random() < mu[u, k] else 0
                    if k == sched[u]:
                        sb[u] = r
                    if k == k_star[u]:
                        sg[u] = r
        for u in range(U):
            T[u, sched[u]] += 1
            S[u, sched[u]] += sb[u]
            if same_slot:
                bq[u] = max(bq[u] + arr[u] - sb[u], 0)
                gq[u] = max(gq[u] + arr[u] - sg[u], 0)
            else:
                bq[u] = max(bq[u] - sb[u], 0) + arr[u]
                gq[u] = max(gq[u] - sg[u], 0) + arr[u]
            if bq[u] == 0:
                last_zero[u] = t
        explored_total += explored
        if full:
            i = t - 1
            tr_expl[i] = explored == 1
            for u in range(U):
                tr_sched[i, u] = sched[u]
                tr_arr[i, u] = arr[u] == 1
                tr_svc[i, u] = sb[u] == 1
                tr_b[i, u] = bq[u]
                tr_g[i, u] = gq[u]
        if ri < n_rec and rec_times[ri] == t:
            for u in range(U):
                rec_d[ri, u] = bq[u] - gq[u]
                rec_b[ri, u] = bq[u]
                rec_g[ri, u] = gq[u]
                rec_age[ri, u] = t - last_zero[u]
            rec_expl[ri] = explored_total
            ri += 1
        if ti < n_tab and tab_times[ti] == t:
            for u in range(U):
                for k in range(K):
                    tab_T[ti, u, k] = T[u, k]
            ti += 1


@dataclass
class _EpisodeOut:
    rec_d: np.ndarray
    rec_b: np.ndarray
    rec_g: np.ndarray
    rec_age: np.ndarray
    rec_expl: np.ndarray
    tab_T: np.ndarray
    trace: "EpisodeTrace | None"


def _simulate(config: SimConfig, episode: int, rec_times: np.ndarray, tab_times: np.ndarray,
              full: bool) -> _EpisodeOut:
    inst = config.instance
    U, K, H = inst.U, inst.K, config.horizon
    d = inst.derived
    pp = np.empty(U)
    rh = np.empty(U)
    for u in range(U):
        pp[u], rh[u] = stationary_params(float(inst.lam[u]), float(d.mu_star[u]), config.same_slot_service)
    streams = episode_streams(config.master_seed, episode)
    n_rec, n_tab = len(rec_times), len(tab_times)
    rec_d = np.zeros((n_rec, U), dtype=np.int64)
    rec_b = np.zeros((n_rec, U), dtype=np.int64)
    rec_g = np.zeros((n_rec, U), dtype=np.int64)
    rec_age = np.zeros((n_rec, U), dtype=np.int64)
    rec_expl = np.zeros(n_rec, dtype=np.int64)
    tab_T = np.zeros((n_tab, U, K), dtype=np.int64)
    h = H if full else 0
    tr_sched = np.zeros((h, U), dtype=np.int64)
    tr_expl = np.zeros(h, dtype=np.bool_)
    tr_arr = np.zeros((h, U), dtype=np.bool_)
    tr_svc = np.zeros((h, U), dtype=np.bool_)
    tr_b = np.zeros((h, U), dtype=np.int64)
    tr_g = np.zeros((h, U), dtype=np.int64)
    q0 = np.zeros((2, U), dtype=np.int64)
    _episode(config.policy.code, float(config.policy.explore_const), inst.lam, inst.mu, d.k_star,
             pp, rh, H, config.coupling is CouplingMode.COMMON_UNIFORM, config.same_slot_service,
             config.shared_init, streams["init"], streams["arrivals"], streams["services"],
             streams["policy"], rec_times, tab_times, rec_d, rec_b, rec_g, rec_age, rec_expl,
             tab_T, full, tr_sched, tr_expl, tr_arr, tr_svc, tr_b, tr_g, q0)
    trace = None
    if full:
        trace = EpisodeTrace(schedule=tr_sched, explored=tr_expl, arrivals=tr_arr, services=tr_svc,
                             bandit_q=tr_b, genie_q=tr_g, initial_bandit=q0[0].copy(),
                             initial_genie=q0[1].copy(), k_star=np.asarray(d.k_star))
    return _EpisodeOut(rec_d, rec_b, rec_g, rec_age, rec_expl, tab_T, trace)


@dataclass(frozen=True)
class EpisodeTrace(Sequence):
    """Column-oriented per-slot trace; indexing yields ``TraceRecord`` (slot t at index t-1)."""

    schedule: np.ndarray      # (H, U)
    explored: np.ndarray      # (H,)
    arrivals: np.ndarray      # (H, U) bool
    services: np.ndarray      # (H, U) bool, bandit system
    bandit_q: np.ndarray      # (H, U)
    genie_q: np.ndarray       # (H, U)
    initial_bandit: np.ndarray
    initial_genie: np.ndarray
    k_star: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.explored.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return TraceRecord(
            t=i + 1,
            schedule=tuple(int(k) for k in self.schedule[i]),
            explored=bool(self.explored[i]),
            arrivals=tuple(bool(a) for a in self.arrivals[i]),
            services=tuple(bool(s) for s in self.services[i]),
            bandit_q=tuple(int(q) for q in self.bandit_q[i]),
            genie_q=tuple(int(q) for q in self.genie_q[i]),
        )


def run_episode(config: SimConfig, episode: int) -> EpisodeTrace:
    """Full per-slot trace of one coupled episode."""
    empty = np.zeros(0, dtype=np.int64)
    return _simulate(config, episode, empty, empty, full=True).trace


# ---------------------------------------------------------------------------
# aggregation

@dataclass
class _Moments:
    n: int
    d: np.ndarray
    d2: np.ndarray
    g: np.ndarray
    g2: np.ndarray
    b: np.ndarray
    age: np.ndarray
    expl: np.ndarray
    T: np.ndarray
    TT: np.ndarray
    dT: np.ndarray

    @classmethod
    def zeros(cls, n_rec: int, n_tab: int, U: int, K: int) -> "_Moments":
        z = lambda *s: np.zeros(s, dtype=np.int64)  # noqa: E731
        return cls(0, z(n_rec, U), z(n_rec, U), z(n_rec, U), z(n_rec, U), z(n_rec, U),
                   z(n_rec, U), z(n_rec), z(n_tab, U, K), z(n_tab, U, K, K), z(n_tab, U, K))

    def add(self, out: _EpisodeOut, tab_idx: np.ndarray) -> None:
        self.n += 1
        self.d += out.rec_d
        self.d2 += out.rec_d * out.rec_d
        self.g += out.rec_g
        self.g2 += out.rec_g * out.rec_g
        self.b += out.rec_b
        self.age += out.rec_age
        self.expl += out.rec_expl
        T = out.tab_T
        self.T += T
        self.TT += T[:, :, :, None] * T[:, :, None, :]
        self.dT += out.rec_d[tab_idx][:, :, None] * T

    def merge(self, other: "_Moments") -> None:
        self.n += other.n
        for name in ("d", "d2", "g", "g2", "b", "age", "expl", "T", "TT", "dT"):
            getattr(self, name).__iadd__(getattr(other, name))


def _half_width(s1, s2, n):
    if n < 2:
        return np.full(np.shape(s1), np.nan)
    var = (np.asarray(s2, dtype=float) - np.asarray(s1, dtype=float) ** 2 / n) / (n - 1)
    return Z95 * np.sqrt(np.maximum(var, 0.0) / n)


@dataclass(frozen=True)
class RegretSeries:
    """Across-episode estimates at the recorded slots.

    ``psi``, ``half_width``, ``regen_age``, ``genie_mean`` and friends are
    ``(n_times, U)``; ``sub_opt_counts`` is the mean assignment-count table
    ``(n_tables, U, K)`` at ``table_times``.
    """

    config: SimConfig
    times: np.ndarray
    psi: np.ndarray
    half_width: np.ndarray
    regen_age: np.ndarray
    explore_frac: np.ndarray
    genie_mean: np.ndarray
    genie_half_width: np.ndarray
    bandit_mean: np.ndarray
    table_times: np.ndarray
    sub_opt_counts: np.ndarray
    moments: _Moments = field(repr=False)

    @property
    def episodes(self) -> int:
        return self.moments.n

    def index_of(self, t: int) -> int:
        i = int(np.searchsorted(self.times, t))
        if i >= len(self.times) or self.times[i] != t:
            raise KeyError(f"slot {t} was not recorded")
        return i

    def table_index(self, t: int) -> int:
        i = int(np.searchsorted(self.table_times, t))
        if i >= len(self.table_times) or self.table_times[i] != t:
            raise KeyError(f"no count table at slot {t}")
        return i


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, workers)


def estimate_regret(config: SimConfig, workers: int | None = None) -> RegretSeries:
    """Monte Carlo estimate of the per-queue queue-regret series."""
    if config.episodes < 2:
        raise ValueError("estimate_regret needs at least 2 episodes")
    inst = config.instance
    rec_times = config.record_times
    tab_times = config.tables
    tab_idx = np.searchsorted(rec_times, tab_times)
    n_rec, n_tab = len(rec_times), len(tab_times)

    def run_chunk(start: int) -> _Moments:
        acc = _Moments.zeros(n_rec, n_tab, inst.U, inst.K)
        for e in range(start, min(start + CHUNK, config.episodes)):
            acc.add(_simulate(config, e, rec_times, tab_times, full=False), tab_idx)
        return acc

    starts = range(0, config.episodes, CHUNK)
    total = _Moments.zeros(n_rec, n_tab, inst.U, inst.K)
    nw = _worker_count(workers)
    if nw == 1:
        parts = map(run_chunk, starts)
        for part in parts:
            total.merge(part)
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            for part in pool.map(run_chunk, starts):
                total.merge(part)

    n = total.n
    return RegretSeries(
        config=config,
        times=rec_times,
        psi=total.d / n,
        half_width=_half_width(total.d, total.d2, n),
        regen_age=total.age / n,
        explore_frac=total.expl / n / rec_times,
        genie_mean=total.g / n,
        genie_half_width=_half_width(total.g, total.g2, n),
        bandit_mean=total.b / n,
        table_times=tab_times,
        sub_opt_counts=total.T / n,
        moments=total,
    )


# ---------------------------------------------------------------------------
# sample-path diagnostics

def suboptimal_increments(trace: EpisodeTrace, u: int) -> np.ndarray:
    """Per-slot explore indicator plus exploit-branch suboptimal indicator for queue u."""
    explored = trace.explored
    subopt = (~explored) & (trace.schedule[:, u] != trace.k_star[u])
    return explored.astype(np.int64) + subopt.astype(np.int64)


def regen_cycle_margins(trace: EpisodeTrace, u: int) -> np.ndarray:
    """Slack of the regenerative-cycle inequality at every slot t = 1..H.

    The inequality bounds ``bandit_q - genie_q`` by the explore and
    suboptimal-exploit count since the bandit queue was last empty (slot 0
    counts as a regeneration point).  Non-negative slack means it holds.
    """
    H = len(trace)
    inc = np.concatenate([[0], np.cumsum(suboptimal_increments(trace, u))])
    t = np.arange(1, H + 1)
    last_zero = np.maximum.accumulate(np.where(trace.bandit_q[:, u] == 0, t, 0))
    rhs = inc[t] - inc[last_zero]
    lhs = trace.bandit_q[:, u] - trace.genie_q[:, u]
    return rhs - lhs


def regen_cycle_check(trace: EpisodeTrace, u: int, t: int) -> bool:
    """Whether the regenerative-cycle inequality holds for queue u at slot t."""
    if not 1 <= t <= len(trace):
        raise ValueError(f"slot {t} outside trace of length {len(trace)}")
    q = trace.bandit_q[:t, u]
    zeros = np.flatnonzero(q == 0)
    start = int(zeros[-1]) + 1 if zeros.size else 0   # slot of last empty queue, 0 if never
    cycle = suboptimal_increments(trace, u)[start:t]
    lhs = int(trace.bandit_q[t - 1, u] - trace.genie_q[t - 1, u])
    return lhs <= int(cycle.sum())


def dominance_violations(trace: EpisodeTrace) -> int:
    """Number of (slot, queue) pairs where the genie queue exceeds the bandit queue."""
    return int(np.count_nonzero(trace.genie_q > trace.bandit_q))


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    half_width: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - 2.0 * self.half_width


def suboptimal_bound_check(series: RegretSeries, inst: ProblemInstance, t: int, u: int = 0) -> BoundCheck:
    """Estimated regret against sum_k gap_k E[T_k(t)] - eps t for queue u.

    ``half_width`` is the 95% half-width of the per-episode difference of the
    two sides, so the correlation between them is accounted for.
    """
    i = series.index_of(t)
    j = series.table_index(t)
    m = series.moments
    n = m.n
    gaps = inst.derived.delta_uk[u]
    eps = float(inst.derived.eps[u])
    lhs = float(series.psi[i, u])
    rhs = float(gaps @ series.sub_opt_counts[j, u]) - eps * t
    # per-episode X = d - gaps.T ; its first two moments from exact integer sums
    sx = m.d[i, u] - gaps @ m.T[j, u]
    sx2 = m.d2[i, u] - 2.0 * gaps @ m.dT[j, u] + gaps @ m.TT[j, u] @ gaps
    hw = float(_half_width(sx, sx2, n))
    return BoundCheck(lhs, rhs, hw)


# ---------------------------------------------------------------------------
# output

SERIES_COLUMNS = ("t", "queue", "psi", "halfwidth", "regen_age_mean", "explore_frac")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def write_series_csv(series: RegretSeries, path: str | Path) -> Path:
    path = Path(path)
    lines = [",".join(SERIES_COLUMNS)]
    U = series.psi.shape[1]
    for i, t in enumerate(series.times):
        for u in range(U):
            lines.append(",".join([
                str(int(t)), str(u), _fmt(series.psi[i, u]), _fmt(series.half_width[i, u]),
                _fmt(series.regen_age[i, u]), _fmt(series.explore_frac[i]),
            ]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_sidecar(series: RegretSeries, path: str | Path, extra: dict | None = None) -> Path:
    path = Path(path)
    payload = {"config": series.config.to_dict(), "episodes_run": series.episodes,
               "stream_tags": STREAM_TAGS,
               "count_tables": {str(int(t)): series.sub_opt_counts[j].tolist()
                                for j, t in enumerate(series.table_times)}}
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
