# tools/plots.py — OneDF v1
"""
SVG figures for the ablation study: bar charts per setting and line charts
over the window length. Values are seed means with ±1 std error bars.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

mpl.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.fonttype": "none",
    "svg.hashsalt": "onedf",     # stable element ids
})

METRIC_LABELS = {"nrmse": "NRMSE (%)", "stability": "Stability error (%)"}
BAR_COLOR = "#505ba6"
LINE_COLORS = {"nrmse": "#505ba6", "stability": "#c0504d"}


def bar_chart(
    path: Union[str, Path],
    labels: Sequence[str],
    means: Dict[str, Sequence[float]],
    stds: Dict[str, Sequence[float]],
    title: str,
) -> Path:
    """One panel per metric, one bar per setting."""
    metrics = list(means)
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics) + 1.0, 3.4), squeeze=False)
    x = range(len(labels))
    for ax, metric in zip(axes[0], metrics):
        ax.bar(x, means[metric], yerr=stds[metric], color=BAR_COLOR, capsize=2, linewidth=0)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=60, ha="right")
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.yaxis.set_ticks_position("left")
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.suptitle(title)
    return _save(fig, path)


def line_chart(
    path: Union[str, Path],
    xs: Sequence[float],
    means: Dict[str, Sequence[float]],
    stds: Dict[str, Sequence[float]],
    xlabel: str,
    title: str,
) -> Path:
    metrics = list(means)
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics) + 1.0, 3.0), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        color = LINE_COLORS.get(metric, BAR_COLOR)
        ax.errorbar(xs, means[metric], yerr=stds[metric], color=color, marker="o", capsize=2, linewidth=1.5)
        ax.set_xticks(list(xs))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.suptitle(title)
    return _save(fig, path)


def _save(fig, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(p, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return p
