"""Figures for the ``report`` and ``rank`` commands. Everything renders off-screen."""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = ["#377eb8", "#e41a1c", "#4daf4a", "#984ea3", "#ff7f00"]

LABELS = {
    "clustering_vig": "VIG clustering",
    "modularity_vig": "VIG modularity",
    "modularity_vcg": "VCG modularity",
    "modularity_lcg": "LCG modularity",
    "alpha_v": r"variable $\alpha_v$",
    "alpha_c": r"clause $\alpha_c$",
}

SCATTER_PAIRS = [
    ("modularity_vig", "clustering_vig"),
    ("modularity_vcg", "modularity_lcg"),
    ("alpha_v", "alpha_c"),
]


def _style():
    plt.rcParams.update({
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "axes.spines.top": False,
        "axes.spines.right": False,
    })


def stats_scatter(groups: Mapping[str, Sequence[dict]], path) -> Path:
    """One panel per property pair, one colour per formula set."""
    _style()
    fig, axes = plt.subplots(1, len(SCATTER_PAIRS), figsize=(3.2 * len(SCATTER_PAIRS), 3.0))
    for ax, (xk, yk) in zip(axes, SCATTER_PAIRS):
        for color, (name, rows) in zip(itertools.cycle(COLORS), groups.items()):
            pts = [(r[xk], r[yk]) for r in rows if r.get(xk) is not None and r.get(yk) is not None]
            if pts:
                xs, ys = zip(*pts)
                ax.scatter(xs, ys, s=12, alpha=0.7, color=color, label=name, edgecolors="none")
        ax.set_xlabel(LABELS[xk])
        ax.set_ylabel(LABELS[yk])
    axes[0].legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def stats_histograms(groups: Mapping[str, Sequence[dict]], path) -> Path:
    _style()
    keys = list(LABELS)
    fig, axes = plt.subplots(2, 3, figsize=(9.0, 5.0))
    for ax, key in zip(axes.ravel(), keys):
        for color, (name, rows) in zip(itertools.cycle(COLORS), groups.items()):
            vals = [r[key] for r in rows if r.get(key) is not None]
            if vals:
                ax.hist(vals, bins=15, alpha=0.5, color=color, label=name)
        ax.set_xlabel(LABELS[key])
    axes[0, 0].legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def solver_times(totals: Mapping[str, float], ranking: Sequence[str], path,
                 groups: Mapping[str, str] | None = None) -> Path:
    _style()
    groups = groups or {}
    palette = {"Application": COLORS[0], "Random": COLORS[1]}
    fig, ax = plt.subplots(figsize=(max(3.0, 0.6 * len(ranking) + 1.5), 3.0))
    ax.bar(range(len(ranking)), [totals[s] for s in ranking],
           color=[palette.get(groups.get(s, ""), "#777777") for s in ranking])
    ax.set_xticks(range(len(ranking)))
    ax.set_xticklabels(ranking, rotation=45, ha="right")
    ax.set_ylabel("total wall time (s)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def ablation_curve(layers: Sequence[int], means: Sequence[float], errs: Sequence[float],
                   reference: float, path) -> Path:
    _style()
    fig, ax = plt.subplots(figsize=(3.2, 2.8))
    ax.errorbar(layers, means, yerr=errs, marker="o", color=COLORS[0], capsize=3, label="generated")
    ax.axhline(reference, color=COLORS[1], ls="--", label="training")
    ax.set_xticks(list(layers))
    ax.set_xlabel("encoder layers")
    ax.set_ylabel("VCG modularity")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
