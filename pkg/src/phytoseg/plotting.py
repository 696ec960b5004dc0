"""Figure rendering. Every plot lands next to a CSV with the same data."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .baseline import CurvePoint


def save_score_histogram(
    path: str | Path,
    edges: np.ndarray,
    counts: np.ndarray,
    threshold: float = 0.0,
    title: str = "PC1 projection",
) -> Path:
    """Histogram of signed PC1 scores with the decision threshold marked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
           color="tab:green", alpha=0.8)
    ax.axvline(threshold, color="black", linestyle="--", linewidth=1,
               label=f"threshold {threshold:g}")
    ax.set_xlabel("signed projection onto PC1")
    ax.set_ylabel("token count")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_scaling_curve(
    path: str | Path,
    points: list[CurvePoint],
    zero_shot_mean: float | None = None,
    zero_shot_label: str = "zero-shot",
    title: str = "supervised scaling",
) -> Path:
    """Mean IoU vs subset size: orange points, std envelope, zero-shot line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = sorted(points, key=lambda p: p.subset_size)
    sizes = np.array([p.subset_size for p in pts], dtype=float)
    means = np.array([p.mean_iou for p in pts])
    stds = np.array([p.std_iou for p in pts])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(sizes, means - stds, means + stds,
                    color="tab:blue", alpha=0.25, label="± std over runs")
    ax.plot(sizes, means, "o-", color="tab:orange", label="mean IoU")
    if zero_shot_mean is not None:
        ax.axhline(zero_shot_mean, color="tab:green", linestyle="--",
                   label=zero_shot_label)
    ax.set_xscale("log", base=2)
    ax.set_xticks(sizes)
    ax.get_xaxis().set_major_formatter(matplotlib.ticker.ScalarFormatter())
    ax.set_xlabel("training samples")
    ax.set_ylabel("mean IoU (validation)")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_method_bars(
    path: str | Path,
    labels: list[str],
    means: list[float],
    stds: list[float],
    title: str = "method comparison",
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels)), 4))
    xs = np.arange(len(labels))
    ax.bar(xs, means, yerr=stds, capsize=4, color="tab:green", alpha=0.85)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("mean IoU")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
