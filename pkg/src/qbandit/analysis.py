"""Curve summaries used by the figure checks: log-time smoothing, peak, decay slope."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

DEFAULT_WINDOW_DECADES = 0.2


def smooth_log(times, values, window: float = DEFAULT_WINDOW_DECADES) -> np.ndarray:
    """Moving average over a window of ``window`` decades centred on each point."""
    lt = np.log10(np.asarray(times, dtype=float))
    v = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    lo = np.searchsorted(lt, lt - window / 2, side="left")
    hi = np.searchsorted(lt, lt + window / 2, side="right")
    return (csum[hi] - csum[lo]) / (hi - lo)


def peak_time(times, values, window: float = DEFAULT_WINDOW_DECADES) -> tuple[int, float]:
    """Slot and height of the maximum of the smoothed curve."""
    sm = smooth_log(times, values, window)
    i = int(np.argmax(sm))
    return int(np.asarray(times)[i]), float(sm[i])


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    points: int
    dropped: int


def loglog_slope(times, values, t_lo: float, t_hi: float) -> SlopeFit:
    """Least-squares slope of ln(value) against ln(t) on ``[t_lo, t_hi]``.

    Non-positive values cannot be logged and are dropped (count reported).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = (t >= t_lo) & (t <= t_hi)
    pos = sel & (v > 0)
    if pos.sum() < 2:
        raise ValueError(f"fewer than two positive points in [{t_lo}, {t_hi}]")
    slope, intercept = np.polyfit(np.log(t[pos]), np.log(v[pos]), 1)
    return SlopeFit(float(slope), float(intercept), int(pos.sum()), int(sel.sum() - pos.sum()))
