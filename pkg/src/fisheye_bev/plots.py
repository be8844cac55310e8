"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(rows, path) -> None:
    """rows: (step, phase, loss) tuples; phases get distinct colors."""
    fig, ax = plt.subplots(figsize=(7, 4))
    phases = []
    for _, phase, _ in rows:
        if phase not in phases:
            phases.append(phase)
    for phase in phases:
        steps = [r[0] for r in rows if r[1] == phase]
        losses = [r[2] for r in rows if r[1] == phase]
        ax.plot(steps, losses, label=phase, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_iou_figure(task_reports: dict, class_names: dict, path) -> None:
    """task_reports: task -> IoUReport (pooled); one bar panel per task."""
    tasks = list(task_reports)
    fig, axes = plt.subplots(1, len(tasks), figsize=(5 * len(tasks), 4), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        rep = task_reports[task]
        names = class_names[task]
        xs = np.arange(len(names))
        ax.bar(xs, rep.per_class, color="tab:blue", alpha=0.8)
        ax.axhline(rep.mean_iou, color="tab:orange", linestyle="--",
                   label=f"mean {rep.mean_iou:.3f}")
        ax.axhline(rep.freq_weighted_iou, color="tab:green", linestyle=":",
                   label=f"freq-wt {rep.freq_weighted_iou:.3f}")
        ax.set_xticks(xs)
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_title(task)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
