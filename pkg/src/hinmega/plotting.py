"""Report figures rendered straight to files with the Agg canvas.

No pyplot state is touched, so these are safe to call from tests and from
the command line without a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["plot_trace", "plot_bench", "plot_similarity", "plot_metrics"]


def _new(figsize=(6.0, 4.0)):
    fig = Figure(figsize=figsize, dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    return path


def plot_trace(objective: Sequence[float], residual: Sequence[float], path) -> Path:
    """Objective and primal residual per iteration, both on log axes."""
    fig = _new((6.0, 5.0))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    it = np.arange(1, len(objective) + 1)
    ax1.semilogy(it, np.maximum(np.asarray(objective, dtype=float), 1e-300), color="C0")
    ax1.set_ylabel("objective")
    ax2.semilogy(it, np.maximum(np.asarray(residual, dtype=float), 1e-300), color="C1")
    ax2.set_ylabel(r"$\|P - Q\|_F$")
    ax2.set_xlabel("iteration")
    for ax in (ax1, ax2):
        ax.grid(True, which="major", alpha=0.3)
    return _save(fig, path)


def plot_bench(ranks: Sequence[int], seconds: Sequence[float], path) -> Path:
    """Wall time against embedding rank with a least-squares line through the origin."""
    fig = _new()
    ax = fig.add_subplot(111)
    r = np.asarray(ranks, dtype=float)
    s = np.asarray(seconds, dtype=float)
    ax.plot(r, s, "o-", color="C0", label="measured")
    if len(r) > 1 and np.dot(r, r) > 0:
        slope = float(np.dot(r, s) / np.dot(r, r))
        grid = np.linspace(0, r.max(), 50)
        ax.plot(grid, slope * grid, "--", color="0.5", label="linear fit")
        ax.legend(frameon=False)
    ax.set_xlabel("rank R")
    ax.set_ylabel("wall time (s)")
    ax.set_xlim(left=0)
    ax.set_ylim(bottom=0)
    return _save(fig, path)


def plot_similarity(values: np.ndarray, path, order: Sequence[int] | None = None, title: str = "") -> Path:
    """Heatmap of a similarity matrix, optionally with rows and columns permuted."""
    S = np.asarray(values, dtype=float)
    if order is not None:
        idx = np.asarray(order)
        S = S[np.ix_(idx, idx)]
    fig = _new((5.0, 4.5))
    ax = fig.add_subplot(111)
    im = ax.imshow(S, cmap="viridis", interpolation="nearest", vmin=0.0, vmax=max(float(S.max(initial=0.0)), 1e-12))
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_metrics(mean: Mapping[str, float], std: Mapping[str, float], path, title: str = "") -> Path:
    """Bar chart of metric means with one-sd error bars."""
    names = list(mean)
    fig = _new((max(3.0, 1.2 * len(names) + 1.5), 3.5))
    ax = fig.add_subplot(111)
    x = np.arange(len(names))
    ax.bar(x, [mean[n] for n in names], yerr=[std.get(n, 0.0) for n in names], color="C0", capsize=4)
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1.05)
    if title:
        ax.set_title(title)
    return _save(fig, path)
