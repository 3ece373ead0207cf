"""Figures written next to the CSV/text outputs (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_loss(rows: np.ndarray, path) -> Path:
    """``rows`` as read by :func:`uavad.train.read_loss_csv`."""
    rows = np.asarray(rows)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for col, name in ((2, "intensity"), (3, "gradient"), (4, "ssim"), (5, "total")):
        ax.plot(rows[:, 0], rows[:, col], label=name, lw=2 if name == "total" else 1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_scores(series, path, max_videos: int = 8) -> Path:
    """Anomaly score per video with labelled frames shaded."""
    groups = list(series.groups())[:max_videos]
    fig, axes = plt.subplots(len(groups), 1, figsize=(7, 1.6 * len(groups) + 0.4),
                             squeeze=False, sharey=True)
    for ax, (vid, idx) in zip(axes[:, 0], groups):
        f = series.frame_index[idx]
        ax.fill_between(f, 0, series.label[idx], step="mid", color="tab:red", alpha=0.2, lw=0)
        ax.plot(f, series.anomaly[idx], color="k", lw=1)
        ax.set_ylim(0, 1)
        ax.set_ylabel(vid, rotation=0, ha="right", va="center", fontsize=7)
    axes[-1, 0].set_xlabel("frame")
    fig.tight_layout()
    return _save(fig, path)


def plot_roc(curve, path, eer_value: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(curve.fpr, curve.tpr, color="k")
    ax.plot([0, 1], [0, 1], ls=":", color="grey")
    if eer_value is not None:
        ax.plot([eer_value], [1 - eer_value], "o", color="tab:red", label=f"EER {eer_value:.3f}")
        ax.legend(frameon=False, loc="lower right")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"AUC {curve.auc:.3f}")
    fig.tight_layout()
    return _save(fig, path)


def plot_spectrum(spectrum, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(np.log1p(np.asarray(spectrum)), cmap="magma")
    ax.set_axis_off()
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return _save(fig, path)
