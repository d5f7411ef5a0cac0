"""Figure output: log-log regret curves rendered with matplotlib, plus a
standalone plot script that redraws the same figure from the CSV files."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import smooth_log  # noqa: E402
from .bounds import BoundCurve  # noqa: E402
from .sim import RegretSeries  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "grid.linestyle": ":",
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "savefig.bbox": "tight",
}


def plot_regret(curves: Sequence[tuple[str, RegretSeries]], path: str | Path, *,
                bounds: Sequence[BoundCurve] = (), queue: int = 0, smooth: float | None = 0.05,
                title: str | None = None) -> Path:
    """Log-log queue-regret curves with 95% bands; bounds drawn dashed where valid.

    Non-positive estimates cannot be shown on a log axis and are masked.
    """
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, s in curves:
            psi = s.psi[:, queue]
            if smooth:
                psi = smooth_log(s.times, psi, smooth)
            hw = s.half_width[:, queue]
            y = np.where(psi > 0, psi, np.nan)
            line, = ax.plot(s.times, y, label=label)
            lo = np.where(psi - hw > 0, psi - hw, np.nan)
            ax.fill_between(s.times, lo, psi + hw, color=line.get_color(), alpha=0.15, linewidth=0)
        for b in bounds:
            y = np.where(b.valid & (b.values > 0) & np.isfinite(b.values), b.values, np.nan)
            if np.isfinite(y).any():
                ax.plot(b.t, y, "--", linewidth=1.0, label=f"{b.name} (up to const.)")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel(r"queue-regret $\Psi(t)$")
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.savefig(path)
        plt.close(fig)
    return path


_SCRIPT = '''"""Redraw {png} from the run's CSV files.  Generated by qbandit; edit freely."""
import csv
import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

SERIES = {series!r}
BOUNDS = {bounds!r}
QUEUE = {queue}
OUT = {png!r}


def read_series(path):
    t, psi, hw = [], [], []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if int(row["queue"]) == QUEUE:
                t.append(int(row["t"]))
                psi.append(float(row["psi"]))
                hw.append(float(row["halfwidth"]))
    return t, psi, hw


fig, ax = plt.subplots(figsize=(6.4, 4.2))
for label, path in SERIES:
    t, psi, hw = read_series(path)
    y = [p if p > 0 else math.nan for p in psi]
    line, = ax.plot(t, y, label=label)
    lo = [p - h if p - h > 0 else math.nan for p, h in zip(psi, hw)]
    hi = [p + h for p, h in zip(psi, hw)]
    ax.fill_between(t, lo, hi, color=line.get_color(), alpha=0.15, linewidth=0)
for path in BOUNDS:
    curves = {{}}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            v = float(row["value"])
            ok = row["valid_flag"] == "1" and v > 0 and math.isfinite(v)
            curves.setdefault(row["bound_name"], ([], []))
            curves[row["bound_name"]][0].append(int(row["t"]))
            curves[row["bound_name"]][1].append(v if ok else math.nan)
    for name, (t, v) in curves.items():
        if any(not math.isnan(x) for x in v):
            ax.plot(t, v, "--", linewidth=1.0, label=name + " (up to const.)")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("t")
ax.set_ylabel("queue-regret")
ax.legend(frameon=False, fontsize=8)
fig.savefig(OUT, bbox_inches="tight")
'''


def write_plot_script(path: str | Path, series: Sequence[tuple[str, str]], png: str,
                      bounds: Sequence[str] = (), queue: int = 0) -> Path:
    """Write a self-contained script; ``series`` pairs labels with CSV paths
    relative to the script's directory (the script is run from there)."""
    path = Path(path)
    path.write_text(_SCRIPT.format(series=list(series), bounds=list(bounds), queue=queue, png=png))
    return path
