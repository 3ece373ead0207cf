"""Frame-level detection metrics: Micro/Macro-AUC, ROC, EER, adaptive-threshold F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidArgument, UndefinedMetric

THRESHOLD_GRID = np.arange(100) / 100.0


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise InvalidArgument(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidArgument("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise InvalidArgument("scores must be finite")
    return s, y.astype(np.int64)


def _both_classes(y: np.ndarray, what: str) -> None:
    if y.size == 0 or y.min() == y.max():
        raise UndefinedMetric(f"{what} needs both normal and anomalous frames")


def auc_micro(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties (higher score = more anomalous)."""
    s, y = _check(scores, labels)
    _both_classes(y, "AUC")
    r = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return float((r[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_macro(scores, labels, video_ids) -> tuple[float, int]:
    """Mean per-video AUC and the number of single-class videos skipped."""
    s, y = _check(scores, labels)
    ids = np.asarray(video_ids, dtype=object)
    if ids.shape != s.shape:
        raise InvalidArgument(f"{ids.size} video ids for {s.size} scores")
    aucs, skipped = [], 0
    for v in dict.fromkeys(ids.tolist()):
        m = ids == v
        if y[m].min() == y[m].max():
            skipped += 1
            continue
        aucs.append(auc_micro(s[m], y[m]))
    if not aucs:
        raise UndefinedMetric("no video contains both normal and anomalous frames")
    return float(np.mean(aucs)), skipped


@dataclass
class RocCurve:
    thresholds: np.ndarray   # descending; the first entry is +inf
    fpr: np.ndarray
    tpr: np.ndarray

    @property
    def auc(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


def roc(scores, labels) -> RocCurve:
    """ROC vertices for thresholds at each distinct score (predict anomaly if score >= t)."""
    s, y = _check(scores, labels)
    _both_classes(y, "ROC")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (y.size - y.sum())]
    return RocCurve(np.r_[np.inf, s[last]], fpr, tpr)


def eer(scores, labels) -> float:
    """Rate where FPR equals FNR, interpolated linearly between ROC vertices."""
    c = roc(scores, labels)
    d = (1.0 - c.tpr) - c.fpr          # decreases from 1 to -1 along the curve
    i = int(np.argmax(d <= 0))
    if d[i] == 0:
        return float(c.fpr[i])
    a = d[i - 1] / (d[i - 1] - d[i])
    return float(c.fpr[i - 1] + a * (c.fpr[i] - c.fpr[i - 1]))


def f1_at(scores, labels, theta: float) -> float:
    s, y = _check(scores, labels)
    pred = s >= theta
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)


def adaptive_threshold(scores, labels, grid=THRESHOLD_GRID) -> tuple[float, float]:
    """Best ``(theta, F1)`` over ``grid``; ties go to the smallest theta."""
    s, y = _check(scores, labels)
    if not y.any():
        raise UndefinedMetric("F1 is undefined without anomalous frames")
    best_t, best_f = float(grid[0]), -1.0
    for t in grid:
        f = f1_at(s, y, float(t))
        if f > best_f:
            best_t, best_f = float(t), f
    return best_t, best_f


def report(series) -> dict[str, float | int]:
    """All frame-level metrics for a :class:`~uavad.scoring.ScoreSeries`."""
    scores, labels = series.anomaly, series.label
    macro, skipped = auc_macro(scores, labels, series.video_id)
    theta, f1 = adaptive_threshold(scores, labels)
    return {
        "micro_auc": auc_micro(scores, labels),
        "macro_auc": macro,
        "eer": eer(scores, labels),
        "best_threshold": theta,
        "best_f1": f1,
        "skipped_videos": skipped,
    }


def format_report(rep: dict) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                   for k, v in rep.items())
