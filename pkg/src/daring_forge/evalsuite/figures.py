"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def ablation_figure(rows: list[dict], path: str | Path) -> None:
    names = [r["config"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    x = np.arange(len(names))
    for key, off in (("acc_obj", -0.3), ("acc_tex", -0.1), ("acc_shape", 0.1), ("acc_all", 0.3)):
        axes[0].bar(x + off, [r[key] for r in rows], width=0.2, label=key)
    axes[0].set_xticks(x, names, rotation=20, ha="right")
    axes[0].set_ylim(0, 1)
    axes[0].set_ylabel("semantic accuracy")
    axes[0].legend(fontsize=8)
    axes[1].bar(x, [r["attn_iou"] for r in rows], width=0.5, color="#4477aa")
    axes[1].set_xticks(x, names, rotation=20, ha="right")
    axes[1].set_ylabel("attention IoU")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def flywheel_figure(
    acc_history: list[dict[int, float]],
    manual_history: list[dict[int, int]],
    threshold: float,
    path: str | Path,
) -> None:
    """Bars show manual label counts per iteration, lines per-category accuracy."""
    categories = sorted({c for h in acc_history for c in h})
    iters = np.arange(len(acc_history))
    fig, ax_acc = plt.subplots(figsize=(9, 4.5))
    ax_cnt = ax_acc.twinx()
    width = 0.8 / max(1, len(categories))
    cmap = plt.get_cmap("tab20")
    for i, cat in enumerate(categories):
        counts = [m.get(cat, 0) for m in manual_history] + [0] * (
            len(acc_history) - len(manual_history)
        )
        ax_cnt.bar(iters + (i - len(categories) / 2) * width, counts[: len(iters)],
                   width=width, color=cmap(i % 20), alpha=0.35)
        ax_acc.plot(iters, [h.get(cat, np.nan) for h in acc_history],
                    color=cmap(i % 20), marker="o", markersize=3, linewidth=1, label=f"q{cat}")
    ax_acc.axhline(threshold, color="black", linestyle="--", linewidth=1)
    ax_acc.set_xlabel("iteration")
    ax_acc.set_ylabel("per-category accuracy")
    ax_cnt.set_ylabel("manual labels")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend(fontsize=6, ncol=4, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def training_curve_figure(log: list[dict], path: str | Path) -> None:
    steps = [r["step"] for r in log]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(steps, [r["loss_noise"] for r in log], label="noise loss", linewidth=1)
    if any(r.get("loss_hola") is not None for r in log):
        ax.plot(steps, [r.get("loss_hola") or np.nan for r in log], label="alignment loss", linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def attention_grid_figure(
    maps: np.ndarray, words: list[str], resolution: int, path: str | Path
) -> None:
    """One heatmap per caption token; maps: [T, S] head-averaged columns."""
    n = len(words)
    cols = min(8, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(1.6 * cols, 1.8 * rows), squeeze=False)
    for j in range(rows * cols):
        ax = axes[j // cols][j % cols]
        ax.axis("off")
        if j < n:
            ax.imshow(maps[j].reshape(resolution, resolution), cmap="viridis")
            ax.set_title(words[j], fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
