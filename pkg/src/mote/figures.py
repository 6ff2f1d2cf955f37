"""Matplotlib renderings written next to the delimited report output.

All figures are rendered headless (Agg) to PNG: grouped metric bars for the
method comparison, diverging heatmaps of the cross-era performance change
mirroring the performance-variation analysis, and adaptation loss curves.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import TemporalEffectMatrix

__all__ = ["plot_metric_bars", "plot_temporal_heatmap", "plot_loss_curves"]


def plot_metric_bars(
    averaged: dict[str, dict[str, float]],
    metrics: tuple[str, ...],
    path: str | Path,
    title: str = "Seed-averaged target-domain performance",
) -> None:
    methods = list(averaged)
    if not methods or not metrics:
        return
    width = 0.8 / len(metrics)
    x = np.arange(len(methods))
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(methods), 4.0))
    for i, metric in enumerate(metrics):
        values = [averaged[m].get(metric, float("nan")) for m in methods]
        ax.bar(x + i * width, values, width=width, label=metric)
    ax.set_xticks(x + width * (len(metrics) - 1) / 2)
    ax.set_xticklabels(methods, rotation=20, ha="right")
    ax.set_ylabel("score")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_temporal_heatmap(matrix: TemporalEffectMatrix, path: str | Path) -> None:
    """Performance change (train on row i, test on column j) minus in-domain."""
    delta = matrix.delta
    t = delta.shape[0]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * t, 1.0 + 0.9 * t))
    bound = max(abs(float(delta.min())), abs(float(delta.max())), 1e-9)
    im = ax.imshow(delta, cmap="RdBu", vmin=-bound, vmax=bound)
    for i in range(t):
        for j in range(t):
            ax.text(j, i, f"{delta[i, j]:+.3f}", ha="center", va="center", fontsize=8)
    ax.set_xticks(range(t), [f"D{j + 1}" for j in range(t)])
    ax.set_yticks(range(t), [f"D{i + 1}" for i in range(t)])
    ax.set_xlabel("evaluation domain")
    ax.set_ylabel("training domain")
    ax.set_title(f"{matrix.metric}: change vs in-domain")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_curves(traces: dict[str, list[float]], path: str | Path) -> None:
    traces = {name: trace for name, trace in traces.items() if trace}
    if not traces:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(traces):
        ax.plot(range(1, len(traces[name]) + 1), traces[name], label=name, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.set_title("Training loss")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
