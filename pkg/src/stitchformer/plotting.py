"""Figures for training metrics and demo-count sweeps (matplotlib, headless)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_metrics(rows, path) -> Path:
    epochs = [r["epoch"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3))
    for ax, key, title in zip(axes, ("loss_a", "loss_b", "loss_c"),
                              ("phase A: policy loss", "phase B: encoder", "phase C: z*")):
        ax.plot(epochs, [float(r[key]) for r in rows], marker="o", ms=3)
        ax.set_title(title)
        ax.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_sweep(reports, path) -> Path:
    counts = [r["demos"] for r in reports]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(counts, [r["contextformer"]["success_rate"] for r in reports], marker="o", label="ContextFormer")
    ax.plot(counts, [r["control"]["success_rate"] for r in reports], marker="s", label="zero-token control")
    ax.set_xlabel("expert demonstrations")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
