"""Figure rendering for the report paths. Every report command writes its
delimited output and drops a PNG next to it."""

from __future__ import annotations

import math

import warnings

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path):
    """Lay out and write the figure. Machines without CJK fonts render boxes
    for Japanese tick labels; that is fine and not worth a warning per glyph."""
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Glyph .* missing from font")
        fig.tight_layout()
        fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_loss_curve(metrics, path) -> None:
    steps = [m[0] for m in metrics]
    losses = [m[1] for m in metrics]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, lw=1.5, color="#1f6fb4", label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    golden = [(m[0], m[2]) for m in metrics if m[2] is not None]
    if golden:
        ax2 = ax.twinx()
        ax2.plot([g[0] for g in golden], [g[1] for g in golden], lw=1.2, color="#c23b22", label="golden error")
        ax2.set_ylabel("golden exact-match error")
        ax2.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def save_roc_pr(result, path) -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 8))
    xs = [p[0] for p in result.roc_points]
    ys = [p[1] for p in result.roc_points]
    ax1.plot(xs, ys, lw=1.5, color="#1f6fb4")
    ax1.plot([0, 1], [0, 1], ls="--", lw=1, color="grey")
    ax1.set_xlabel("false positive rate")
    ax1.set_ylabel("true positive rate")
    ax1.set_title(f"ROC (AUC = {result.auc:.3f})")
    ax1.grid(alpha=0.3)
    rs = [p[0] for p in result.pr_points]
    ps = [p[1] for p in result.pr_points]
    ax2.plot(rs, ps, lw=1.5, color="#c23b22")
    ax2.set_xlabel("recall")
    ax2.set_ylabel("precision")
    ax2.set_xlim(0, 1)
    ax2.set_ylim(0, 1.05)
    ax2.grid(alpha=0.3)
    _finish(fig, path)


def save_ablation(cells, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for flag, color in ((False, "#1f6fb4"), (True, "#c23b22")):
        rows = sorted([c for c in cells if c.use_latlong == flag], key=lambda c: c.max_neighbors)
        if not rows:
            continue
        ax.plot(
            [c.max_neighbors for c in rows],
            [1.0 - c.error_rate for c in rows],
            marker="o",
            lw=1.5,
            color=color,
            label="with lat-long" if flag else "without lat-long",
        )
    ax.set_xlabel("max neighbors")
    ax.set_ylabel("exact-match accuracy")
    ax.grid(alpha=0.3)
    ax.legend()
    _finish(fig, path)


def save_attention_heatmap(export, path) -> None:
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(export.col_labels)), max(4, 0.35 * len(export.row_labels))))
    im = ax.imshow(export.matrix, aspect="auto", cmap="Blues", vmin=0.0)
    ax.set_xticks(range(len(export.col_labels)))
    ax.set_xticklabels(export.col_labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(export.row_labels)))
    ax.set_yticklabels(export.row_labels, fontsize=8)
    ax.set_xlabel("memory rows")
    ax.set_ylabel("decoder steps")
    fig.colorbar(im, ax=ax, shrink=0.8)
    _finish(fig, path)


def save_gap_histogram(gaps, path) -> None:
    finite = [g for g in gaps if math.isfinite(g)]
    fig, ax = plt.subplots(figsize=(7, 4))
    if finite:
        ax.hist(finite, bins=min(40, max(5, len(finite) // 5)), color="#1f6fb4", alpha=0.85)
    ax.set_xlabel("beam-score confidence gap")
    ax.set_ylabel("count")
    ax.grid(alpha=0.3)
    _finish(fig, path)


def save_manipulation(rows, path) -> None:
    spellings = sorted({r.spelling for r in rows})
    conditions = ["original", "force_p1", "force_p2"]
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(spellings)), 4))
    x = np.arange(len(spellings))
    colors = {"original": "#888888", "force_p1": "#1f6fb4", "force_p2": "#c23b22"}
    for k, cond in enumerate(conditions):
        vals = []
        for sp in spellings:
            match = [r for r in rows if r.spelling == sp and r.condition == cond]
            vals.append(match[0].proportion_p1 if match else 0.0)
        ax.bar(x + (k - 1) * width, vals, width, label=cond, color=colors[cond])
    ax.set_xticks(x)
    ax.set_xticklabels(spellings)
    ax.set_ylabel("proportion decoding the primary pronunciation")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)
