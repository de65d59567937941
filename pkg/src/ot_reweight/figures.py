"""Matplotlib figures rendered next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def render_run_figures(results, out_dir):
    out = Path(out_dir)
    _confusion_heatmap(results[-1].stage2.confusion,
                       out / "confusion_stage2.png")
    per_class = [r.class_mean_weights for r in results
                 if r.class_mean_weights is not None]
    if per_class:
        _class_weight_bars(np.mean(per_class, axis=0),
                           out / "class_mean_weights.png")


def _confusion_heatmap(confusion, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(confusion, cmap="viridis")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_title("Confusion matrix (stage 2)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _class_weight_bars(class_means, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(np.arange(class_means.size), class_means, color="tab:blue")
    ax.set_xlabel("class (head → tail)")
    ax.set_ylabel("mean example weight")
    ax.set_title("Final per-class mean weights")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_ablation_figure(cells, cost_kinds, q_modes, out_dir):
    grid = np.array([[cells[(ck, qm, "maintained")]["stage2_balanced_acc_mean"]
                      for qm in q_modes] for ck in cost_kinds])
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, cmap="magma")
    ax.set_xticks(range(len(q_modes)), q_modes)
    ax.set_yticks(range(len(cost_kinds)), cost_kinds)
    ax.set_xlabel("meta distribution")
    ax.set_ylabel("cost kind")
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center",
                    color="white")
    ax.set_title("Balanced accuracy (maintained weights)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(Path(out_dir) / "ablation_grid.png", dpi=150)
    plt.close(fig)
