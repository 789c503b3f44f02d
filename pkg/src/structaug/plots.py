"""Report figures written straight to PNG files.

Uses the non-interactive Agg backend and strips the ``Software`` PNG chunk,
so the same rows always give the same bytes.
"""

from __future__ import annotations

from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_METADATA = {"Software": None}

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}

METHOD_COLORS = {"low_weight": "tab:blue", "random": "tab:orange", "baseline": "0.3"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_drop_sweep(rows: Sequence[Dict], path, metric="macro_f1"):
    """Mean metric (with a one-std band over seeds) against drop ratio per method."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        base = [r for r in rows if r["method"] == "baseline"]
        for method in sorted({r["method"] for r in rows} - {"baseline"}):
            pts = sorted((r for r in rows if r["method"] == method), key=lambda r: r["ratio"])
            x = np.array([r["ratio"] for r in pts])
            m = np.array([r[f"{metric}_mean"] for r in pts])
            s = np.array([r[f"{metric}_std"] for r in pts])
            color = METHOD_COLORS.get(method)
            ax.plot(x, m, marker="o", ms=3, label=method.replace("_", " "), color=color)
            ax.fill_between(x, m - s, m + s, alpha=0.2, color=color, lw=0)
        if base:
            ax.axhline(base[0][f"{metric}_mean"], ls="--", lw=1, color=METHOD_COLORS["baseline"],
                       label="no augmentation")
        ax.set_xlabel("drop ratio")
        ax.set_ylabel(metric.replace("_", "-").replace("f1", "F1"))
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_bars(labels: Sequence[str], means: Sequence[float], stds: Sequence[float], path, ylabel="macro-F1"):
    """Horizontal bars with std error bars; used for ablations and per-task reports."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 0.45 * len(labels) + 1.2))
        y = np.arange(len(labels))
        ax.barh(y, means, xerr=stds, color="tab:blue", alpha=0.8, capsize=3)
        ax.set_yticks(y)
        ax.set_yticklabels([str(l).replace("_", " ") for l in labels])
        ax.invert_yaxis()
        lo = max(0.0, min(m - s for m, s in zip(means, stds)) - 0.05) if len(means) else 0.0
        ax.set_xlim(lo, min(1.0, max(m + s for m, s in zip(means, stds)) + 0.02) if len(means) else 1.0)
        ax.set_xlabel(ylabel)
        return _save(fig, path)


def plot_degree_histogram(degrees, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        d = np.asarray(degrees)
        bins = np.arange(0, int(d.max()) + 2) - 0.5 if d.size and d.max() < 60 else 30
        ax.hist(d, bins=bins, color="tab:blue", alpha=0.8)
        ax.set_xlabel("degree")
        ax.set_ylabel("nodes")
        return _save(fig, path)
