"""Matplotlib renders written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_loss_map",
    "plot_training_curves",
    "plot_fusion_distance",
    "plot_holdout_curve",
    "plot_group_bars",
    "plot_size_histogram",
    "plot_metric_by_category",
]


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_loss_map(loss_map: np.ndarray, path, title: str = "discriminator loss") -> None:
    """False-color per-pixel loss map."""
    fig, ax = plt.subplots(figsize=(4.2, 4))
    im = ax.imshow(loss_map, cmap="coolwarm")
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def plot_training_curves(records, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    for branch, color in (("general", "tab:blue"), ("blur", "tab:orange")):
        rs = [r for r in records if r.branch == branch]
        its = [r.iteration for r in rs]
        axes[0].plot(its, [r.d_loss for r in rs], label=branch, color=color, lw=0.8)
        axes[1].plot(its, [r.g_l1 for r in rs], label=branch, color=color, lw=0.8)
    axes[0].set_title("discriminator loss")
    axes[1].set_title("generator L1")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_fusion_distance(logs, path) -> None:
    """Cross-branch weight distance at each fusion event."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    its = [f.iteration for f in logs]
    axes[0].plot(its, [1.0 - f.cos_before for f in logs], "o-", ms=3, label="before")
    axes[0].plot(its, [1.0 - f.cos_after for f in logs], "s-", ms=3, label="after")
    axes[0].set_title("cosine distance between branches")
    axes[0].set_yscale("log")
    axes[1].plot(its, [f.diff_norm_before for f in logs], "o-", ms=3, label="before")
    axes[1].plot(its, [f.diff_norm_after for f in logs], "s-", ms=3, label="after")
    axes[1].set_title("weight difference norm")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_holdout_curve(records, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot([r.iteration for r in records], [r.l1 for r in records], lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("held-out L1 (fused model)")
    _save(fig, path)


def plot_group_bars(stats: dict[str, float], path, title: str, ylabel: str) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    keys = list(stats)
    ax.bar(keys, [stats[k] for k in keys], color="tab:purple")
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    _save(fig, path)


def plot_size_histogram(fractions, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.hist(fractions, bins=20, range=(0, 1), color="tab:green")
    ax.axvline(0.45, color="k", ls="--", lw=0.8)
    ax.axvline(0.55, color="k", ls="--", lw=0.8)
    ax.set_xlabel("blur area fraction")
    ax.set_ylabel("samples")
    _save(fig, path)


def plot_metric_by_category(aggregate_rows, metric: str, path) -> None:
    rows = [r for r in aggregate_rows if r.metric == metric]
    labels = [f"{r.blur_type}/{r.size_category}/{r.intensity}" for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.5, 0.6 * len(rows)), 3.4))
    xs = np.arange(len(rows))
    width = 0.27
    blur_vals = [r.blur_mean if r.blur_mean is not None else np.nan for r in rows]
    focus_vals = [r.focus_mean if r.focus_mean is not None else np.nan for r in rows]
    ax.bar(xs - width, blur_vals, width, label="blur region")
    ax.bar(xs, focus_vals, width, label="focus region")
    ax.bar(xs + width, [r.all_mean for r in rows], width, label="all pixels")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_title(metric)
    ax.legend(fontsize=8)
    _save(fig, path)
