"""Figure rendering for the report path.

Figures are written next to the delimited text exports so runs can be
inspected without re-loading snapshots.  The Agg backend keeps this usable
from headless CLI runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

MODEL_ORDER = ("clean", "poisoned", "repaired", "retrained")
METRIC_ORDER = ("accuracy", "precision", "recall", "f1")


def save_metrics_figure(metrics_by_model, path) -> None:
    """Grouped bar chart of the four metrics for the four model states."""
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(METRIC_ORDER))
    width = 0.2
    for i, model in enumerate(MODEL_ORDER):
        values = [metrics_by_model[model].as_dict()[m] for m in METRIC_ORDER]
        ax.bar(x + (i - 1.5) * width, values, width, label=model)
    ax.set_xticks(x)
    ax.set_xticklabels(METRIC_ORDER)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    ax.set_title("test metrics by model state")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_heatmap_figure(table, path) -> None:
    """Probability-delta heatmap: rows are (poisoned, neighbor) pairs,
    columns are classes."""
    rows = table.deltas.shape[0]
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.28 * rows + 1.2)))
    if rows:
        limit = max(1e-12, np.abs(table.deltas).max())
        im = ax.imshow(table.deltas, cmap="coolwarm", vmin=-limit, vmax=limit,
                       aspect="auto")
        fig.colorbar(im, ax=ax, label="probability delta")
        ax.set_yticks(range(rows))
        ax.set_yticklabels(
            [f"{p}->{n}" for p, n in zip(table.poisoned, table.neighbors)], fontsize=7
        )
        ax.set_xticks(range(table.deltas.shape[1]))
    else:
        ax.text(0.5, 0.5, "no neighbors to validate", ha="center", va="center")
        ax.set_axis_off()
    ax.set_xlabel("class")
    ax.set_title("influence reduction per neighbor")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_score_figure(report, path) -> None:
    """Histogram of detector scores (node scores if present, else edge)."""
    values = list(report.node_scores.values()) or list(report.edge_scores.values())
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if values:
        ax.hist(values, bins=min(40, max(5, len(values) // 5)), color="steelblue")
    ax.set_xlabel(f"{report.kind} score")
    ax.set_ylabel("count")
    ax.set_title(f"{report.kind} score distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
