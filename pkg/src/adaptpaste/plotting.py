"""Figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import METRIC_NAMES, ThresholdReport  # noqa: E402


def plot_sweep(report: ThresholdReport, path: str | Path, title: str = "Confidence threshold sweep") -> Path:
    """Precision and recall against threshold, one panel per regime."""
    regimes = [r for r in ("exact_match", "valid_paste", "variable") if report.regime(r)]
    fig, axes = plt.subplots(1, len(regimes), figsize=(4.2 * len(regimes), 3.4), sharey=True, squeeze=False)
    for ax, regime in zip(axes[0], regimes):
        rows = report.regime(regime)
        xs = [r.threshold for r in rows]
        ax.plot(xs, [r.recall for r in rows], marker="o", ms=3, label="recall")
        prec = [(r.threshold, r.precision) for r in rows if r.precision is not None]
        if prec:
            ax.plot(*zip(*prec), marker="s", ms=3, label="precision")
        ax.set_title(regime.replace("_", " "))
        ax.set_xlabel("confidence threshold")
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("fraction")
    axes[0][-1].legend(loc="lower left")
    fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_metrics(metrics: dict[str, dict], path: str | Path, title: str = "Adaptation metrics") -> Path:
    names = [n for n in METRIC_NAMES if metrics[n]["value"] is not None]
    values = [metrics[n]["value"] for n in names]
    fig, ax = plt.subplots(figsize=(7, 3.4))
    bars = ax.bar(range(len(names)), values, color="#4C72B0")
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.01, f"{100 * v:.1f}", ha="center", va="bottom", fontsize=8)
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_ylim(0, 1.1)
    ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training(history: list[dict], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot([h["step"] for h in history], [h["loss"] for h in history], lw=1, label="train")
    val = [(h["step"], h["valid_loss"]) for h in history if h.get("valid_loss") is not None]
    if val:
        ax.plot(*zip(*val), marker="o", ms=3, label="valid")
    ax.set_xlabel("step")
    ax.set_ylabel("cross-entropy")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
