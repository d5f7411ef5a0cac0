"""Closed-form regret bounds for overlays and golden-value checks.

The bounds are stated up to constants that are never pinned down (the
O(.) constants and the window constants of the lower bounds).  Those are set
to 1 here and every curve carries a caveat saying so; the overlays are only
meaningful for comparing slopes and shapes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .core import ProblemInstance

UP_TO_CONSTANT = "up to unspecified constant"

Form = Literal["single", "average", "per_queue"]


class DivergentKL(ValueError):
    pass


class WindowEmpty(ValueError):
    pass


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), with 0 ln 0 = 0."""
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise ValueError(f"probabilities must lie in [0, 1], got p={p}, q={q}")
    if q in (0.0, 1.0):
        if p == q:
            return 0.0
        raise DivergentKL(f"KL({p}, {q}) is infinite")
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(out, 0.0)


def d_mu(inst: ProblemInstance) -> float:
    """Gap over KL(mu_min, (mu_max + 1) / 2); with one queue mu_max is mu*."""
    d = inst.derived
    return d.delta / bernoulli_kl(d.mu_min, (d.mu_max + 1.0) / 2.0)


def _multiplicity(inst: ProblemInstance, form: Form) -> tuple[float, float]:
    """(arrival factor, server-count factor) for the chosen lower-bound form."""
    d = inst.derived
    if form == "single":
        if inst.U != 1:
            raise ValueError("the 'single' form is the one-queue statement; use 'average' or 'per_queue'")
        return float(inst.lam[0]) / 4.0, inst.K - 1.0
    if form == "average":
        return d.lambda_min / 8.0, inst.K - 1.0
    if form == "per_queue":
        return d.lambda_min / 8.0, float(max(inst.U - 1, 2 * (inst.K - inst.U)))
    raise ValueError(f"unknown form {form!r}")


def late_stage_lb(inst: ProblemInstance, alpha: float, t: float, form: Form = "single") -> float:
    """Infinitely-often lower bound on regret for alpha-consistent policies, ~ 1/t."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    lam_factor, count = _multiplicity(inst, form)
    return lam_factor * d_mu(inst) * (1.0 - alpha) * count / t


@dataclass(frozen=True)
class EarlyStageBound:
    value: float
    window_right: float
    # left end max{C1 K^gamma, tau} with the unknown constants set to 1
    window_left_nominal: float
    caveat: str = UP_TO_CONSTANT

    @property
    def effectively_empty(self) -> bool:
        return self.window_left_nominal > self.window_right


def early_stage_lb(inst: ProblemInstance, alpha: float, gamma: float, t: float,
                   form: Form = "single", u: int = 0) -> EarlyStageBound:
    """Heavy-load early-stage lower bound ~ ln t / ln ln t and its window.

    Forms: ``single`` (one queue, D/2 factor, right end (K-1)D/(2 eps)),
    ``average`` (D/4, right end (K-1)D/(4 eps_bar)) and ``per_queue`` for
    queue ``u`` (D/4 max{U-1, 2(K-U)}, right end (K-1)D/(2 eps_u)).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not gamma > 1.0 / (1.0 - alpha):
        raise ValueError(f"gamma must exceed 1/(1-alpha) = {1.0 / (1.0 - alpha):.6g}")
    if t < 3:
        raise ValueError("t must be >= 3 so that ln ln t > 0")
    d = inst.derived
    D = d_mu(inst)
    K = inst.K
    if form == "single":
        if inst.U != 1:
            raise ValueError("the 'single' form is the one-queue statement")
        coef, right = D / 2.0 * (K - 1), (K - 1) * D / (2.0 * float(d.eps[0]))
    elif form == "average":
        coef, right = D / 4.0 * (K - 1), (K - 1) * D / (4.0 * d.eps_bar)
    elif form == "per_queue":
        coef = D / 4.0 * max(inst.U - 1, 2 * (K - inst.U))
        right = (K - 1) * D / (2.0 * float(d.eps[u]))
    else:
        raise ValueError(f"unknown form {form!r}")
    if right < 3:
        raise WindowEmpty(f"window right end {right:.6g} < 3")
    lt = math.log(t)
    return EarlyStageBound(coef * lt / math.log(lt), right, float(K) ** gamma)


def early_stage_window_right(inst: ProblemInstance, form: Form = "single", u: int = 0) -> float:
    d = inst.derived
    D = d_mu(inst)
    if form == "average":
        return (inst.K - 1) * D / (4.0 * d.eps_bar)
    eps = float(d.eps[0] if form == "single" else d.eps[u])
    return (inst.K - 1) * D / (2.0 * eps)


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ThsUpperTerms:
    w: float
    v_prime: float
    v: float
    bound: float               # K v ln^2 t / t
    corollary_bound: float     # K ln^3 t / (eps^2 t)
    valid: bool
    corollary_valid: bool
    conditions: dict = field(default_factory=dict)
    log_w: float = 0.0
    caveat: str = UP_TO_CONSTANT


def ths_upper_terms(inst: ProblemInstance, t: float, u: int = 0) -> ThsUpperTerms:
    """Terms of the late-stage Q-ThS upper bound for queue ``u`` at slot ``t``.

    The three validity conditions are ``w/ln t >= 2/eps``,
    ``t >= exp(6/gap^2)`` and ``v + v' <= t/2``.  The simplified
    K ln^3 t/(eps^2 t) form has its own window (``corollary_valid``):
    the first two conditions plus ``t/w >= max(24K/eps, 15 K^2 ln t)`` and
    ``t/ln t >= 198/eps^2``.
    """
    if t < 2:
        raise ValueError("t must be >= 2")
    d = inst.derived
    K = inst.K
    eps = float(d.eps[u])
    lt = math.log(t)
    log_w = (2.0 * lt / d.delta) ** (2.0 / 3.0)
    w = _safe_exp(log_w)
    v_prime = 6.0 * K / eps * w
    v = 24.0 / eps ** 2 * lt + 60.0 * K / eps * v_prime * lt ** 2 / t
    conditions = {
        "w_over_log_t": w / lt >= 2.0 / eps,
        "t_after_exp_6_over_gap2": lt >= 6.0 / d.delta ** 2,
        "v_plus_vprime_le_half_t": v + v_prime <= t / 2.0,
    }
    corollary_ok = (conditions["w_over_log_t"] and conditions["t_after_exp_6_over_gap2"]
                    and t / w >= max(24.0 * K / eps, 15.0 * K ** 2 * lt)
                    and t / lt >= 198.0 / eps ** 2)
    return ThsUpperTerms(
        w=w, v_prime=v_prime, v=v,
        bound=K * v * lt ** 2 / t,
        corollary_bound=K * lt ** 3 / (eps ** 2 * t),
        valid=all(conditions.values()),
        corollary_valid=corollary_ok,
        conditions=conditions,
        log_w=log_w,
    )


def corollary_upper(K: int, eps: float, t: float) -> float:
    """K ln^3 t / (eps^2 t)."""
    lt = math.log(t)
    return K * lt ** 3 / (eps ** 2 * t)


def explore_count_bound(t1: float, t2: float, K: int, t: float) -> float:
    """Tail threshold 5 max(ln t, K (ln^3 t2 - ln^3 t1)) for explores in (t1, t2]."""
    if not 1 <= t1 < t2 <= t:
        raise ValueError(f"need 1 <= t1 < t2 <= t, got {t1}, {t2}, {t}")
    return 5.0 * max(math.log(t), K * (math.log(t2) ** 3 - math.log(t1) ** 3))


def explore_mean_bound(t1: float, t2: float, K: int, c: float = 3.0) -> float:
    """Upper bound (c/3) K (ln^3 t2 - ln^3 t1) on the mean explore count in (t1, t2]."""
    if not 1 <= t1 < t2:
        raise ValueError(f"need 1 <= t1 < t2, got {t1}, {t2}")
    return c / 3.0 * K * (math.log(t2) ** 3 - math.log(t1) ** 3)


def early_stage_heuristic_ub(K: int, t: float) -> float:
    """2 K ln^3 t: a sketched early-stage upper bound, overlay only."""
    return 2.0 * K * math.log(t) ** 3


@dataclass(frozen=True)
class BoundCurve:
    name: str
    validity: str
    t: np.ndarray
    values: np.ndarray
    valid: np.ndarray


def bound_curves(inst: ProblemInstance, times: Iterable[int], alpha: float = 0.5,
                 gamma: float | None = None, u: int = 0) -> list[BoundCurve]:
    """All overlays for one instance, evaluated on ``times``.

    Values outside a bound's validity are still reported with ``valid`` false,
    except the early-stage lower bound, which is only defined for t >= 3.
    """
    times = np.asarray(list(times), dtype=np.int64)
    if gamma is None:
        gamma = 1.0 / (1.0 - alpha) + 0.5
    single = inst.U == 1
    form: Form = "single" if single else "per_queue"
    eps = float(inst.derived.eps[u])
    curves = []

    late = np.array([late_stage_lb(inst, alpha, t, form) for t in times])
    curves.append(BoundCurve("late_stage_lb", f"infinitely often, {UP_TO_CONSTANT}",
                             times, late, np.ones(len(times), dtype=bool)))

    right = early_stage_window_right(inst, form, u)
    left = float(inst.K) ** gamma
    et = times[times >= 3]
    if right >= 3 and len(et):
        vals = np.array([early_stage_lb(inst, alpha, gamma, t, form, u).value for t in et])
        curves.append(BoundCurve(
            "early_stage_lb", f"t in [max(C1 K^gamma, tau), {right:.6g}], C1 = tau = 1; {UP_TO_CONSTANT}",
            et, vals, (et >= left) & (et <= right)))

    ut = times[times >= 2]
    terms = [ths_upper_terms(inst, t, u) for t in ut]
    curves.append(BoundCurve("qths_upper", f"theorem validity window; {UP_TO_CONSTANT}",
                             ut, np.array([x.bound for x in terms]), np.array([x.valid for x in terms])))
    curves.append(BoundCurve("qths_corollary_upper", f"corollary validity window; {UP_TO_CONSTANT}",
                             ut, np.array([x.corollary_bound for x in terms]),
                             np.array([x.corollary_valid for x in terms])))
    curves.append(BoundCurve("early_stage_heuristic_ub", f"sketch only, t > max(C2, U); {UP_TO_CONSTANT}",
                             ut, np.array([early_stage_heuristic_ub(inst.K, t) for t in ut]),
                             ut > inst.U))
    return curves


BOUND_COLUMNS = ("t", "bound_name", "value", "valid_flag")


def write_bounds_csv(curves: list[BoundCurve], path) -> None:
    lines = [",".join(BOUND_COLUMNS)]
    for c in curves:
        for t, v, ok in zip(c.t, c.values, c.valid):
            lines.append(f"{int(t)},{c.name},{v:.10g},{int(bool(ok))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
