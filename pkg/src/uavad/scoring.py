"""Per-frame PSNR, per-video min-max normal scores, and the score CSV."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgument, ShapeError

PSNR_CAP = 100.0
PEAK_FLOOR = 1e-12
CSV_HEADER = ("video_id", "frame_index", "psnr_db", "normal_score", "anomaly_score", "label")


def psnr(target, pred, fixed_range: float | None = None) -> float:
    """``10 log10(max(pred)^2 / MSE)``, capped at 100 dB.

    ``fixed_range`` replaces ``max(pred)`` with a constant peak (e.g. 2.0 for
    ``[-1, 1]`` data).
    """
    y = np.asarray(target, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeError("psnr operands differ in shape", y.shape, p.shape)
    mse = float(np.mean((p - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    peak = float(fixed_range) if fixed_range is not None else float(p.max())
    peak2 = max(peak * peak, PEAK_FLOOR)
    return min(PSNR_CAP, 10.0 * math.log10(peak2 / mse))


@dataclass
class ScoreSeries:
    video_id: list[str] = field(default_factory=list)
    frame_index: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    psnr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    normal: np.ndarray = field(default_factory=lambda: np.zeros(0))
    label: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    anomaly: np.ndarray = field(default_factory=lambda: np.zeros(0))
    degenerate: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.video_id)

    def videos(self) -> list[str]:
        return list(dict.fromkeys(self.video_id))

    def groups(self):
        """``(video_id, row indices)`` in first-appearance order."""
        ids = np.array(self.video_id, dtype=object)
        for v in self.videos():
            yield v, np.flatnonzero(ids == v)


def normalize_video(psnrs) -> tuple[np.ndarray, bool]:
    """Min-max normal score of one video; constant input gives 0.5 and ``True``."""
    x = np.asarray(psnrs, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgument("cannot normalize an empty video")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full(x.shape, 0.5), True
    return (x - lo) / (hi - lo), False


def normalize_scores(videos) -> ScoreSeries:
    """``videos``: iterable of ``(video_id, frame_indices, psnrs, labels)``."""
    s = ScoreSeries()
    idx, ps, ns, ls = [], [], [], []
    for vid, frames, psnrs, labels in videos:
        norm, flat = normalize_video(psnrs)
        if len(frames) != len(norm) or len(labels) != len(norm):
            raise ShapeError(f"video {vid}: misaligned score columns", len(frames), len(norm))
        if flat:
            s.degenerate.append(vid)
        s.video_id += [vid] * len(norm)
        idx.append(np.asarray(frames, np.int64))
        ps.append(np.asarray(psnrs, np.float64))
        ns.append(norm)
        ls.append(np.asarray(labels, np.int64))
    if idx:
        s.frame_index, s.psnr = np.concatenate(idx), np.concatenate(ps)
        s.normal, s.label = np.concatenate(ns), np.concatenate(ls)
        s.anomaly = 1.0 - s.normal
    return s


def score_clips(model, clips, batch: int = 8, fixed_range: float | None = None) -> ScoreSeries:
    """Predict every frame that has ``N`` predecessors and score it.

    Clips shorter than ``N + 1`` frames are skipped with a warning.
    """
    from .model import predict_next

    N = model.cfg.clip_len
    videos = []
    for clip in clips:
        T = len(clip.frames)
        if T < N + 1:
            warnings.warn(f"{clip.name}: {T} frames is too short for clip length {N}; skipped",
                          stacklevel=2)
            continue
        targets = list(range(N, T))
        psnrs = []
        for i in range(0, len(targets), batch):
            ts = targets[i:i + batch]
            x = np.stack([clip.frames[t - N:t] for t in ts])
            pred = predict_next(model, x)
            psnrs += [psnr(clip.frames[t], pred[j], fixed_range) for j, t in enumerate(ts)]
        videos.append((clip.name, targets, psnrs, clip.labels[N:]))
    return normalize_scores(videos)


def write_scores_csv(path: str | Path, s: ScoreSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(s)):
            w.writerow((s.video_id[i], int(s.frame_index[i]), repr(float(s.psnr[i])),
                        repr(float(s.normal[i])), repr(float(s.anomaly[i])), int(s.label[i])))


def read_scores_csv(path: str | Path) -> ScoreSeries:
    """Parse a score CSV; malformed rows raise :class:`DataError` with the line number."""
    rows = {k: [] for k in CSV_HEADER}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{line}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                vals = (row[0], int(row[1]), float(row[2]), float(row[3]), float(row[4]),
                        int(row[5]))
            except ValueError as e:
                raise DataError(f"{path}:{line}: {e}") from None
            if vals[5] not in (0, 1):
                raise DataError(f"{path}:{line}: label must be 0 or 1")
            if not 0.0 <= vals[3] <= 1.0 or not all(map(math.isfinite, vals[2:5])):
                raise DataError(f"{path}:{line}: scores must be finite with normal_score in [0, 1]")
            for k, v in zip(CSV_HEADER, vals):
                rows[k].append(v)
    s = ScoreSeries(video_id=rows["video_id"],
                    frame_index=np.array(rows["frame_index"], np.int64),
                    psnr=np.array(rows["psnr_db"], np.float64),
                    normal=np.array(rows["normal_score"], np.float64),
                    label=np.array(rows["label"], np.int64),
                    anomaly=np.array(rows["anomaly_score"], np.float64))
    return s
