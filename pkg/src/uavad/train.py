"""Training loop over sliding windows of normal clips.

The sample order is a function of (seed, step) alone: epoch ``e`` visits the
windows in ``default_rng([seed, e]).permutation``, and step ``k`` takes
positions ``k*B .. k*B+B-1`` of the concatenated epochs.  Together with the
saved optimizer moments and BN statistics this makes a resumed run
bit-identical to an unbroken one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import config as config_mod
from .autodiff import Tape
from .config import RunConfig
from .data import Clip
from .errors import DataError, InvalidArgument
from .losses import loss_terms
from .model import Predictor, load_state, read_checkpoint, state_dict, write_checkpoint
from .optim import AdamW, AdamWState

LOSS_HEADER = ("step", "lr", "l_int", "l_grl", "l_ssim", "total")


def sliding_windows(clips: list[Clip], length: int) -> list[tuple[int, int]]:
    """``(clip index, start)`` for every run of ``length`` consecutive frames."""
    return [(c, s) for c, clip in enumerate(clips) for s in range(len(clip.frames) - length + 1)]


def check_normal_only(clips: list[Clip]) -> None:
    for clip in clips:
        if np.any(clip.labels != 0):
            raise DataError(f"{clip.name}: training split contains anomalous frames")


def batch_positions(step: int, batch: int, n_windows: int, seed: int) -> list[int]:
    out = []
    for pos in range(step * batch, (step + 1) * batch):
        epoch, offset = divmod(pos, n_windows)
        out.append(int(np.random.default_rng([seed, epoch]).permutation(n_windows)[offset]))
    return out


@dataclass
class TrainResult:
    model: Predictor
    optimizer: AdamW
    rows: list[tuple] = field(default_factory=list)


def save_training_state(path, model: Predictor, opt: AdamW, cfg: RunConfig) -> None:
    tensors = state_dict(model)
    names = [n for n, _ in model.named_parameters()]
    if opt.state is not None:
        for n, m, v in zip(names, opt.state.m, opt.state.v):
            tensors["opt.m." + n] = m
            tensors["opt.v." + n] = v
        tensors["opt.step"] = np.array(float(opt.state.step))
    write_checkpoint(path, config_mod.dump(cfg), tensors)


def load_model(path) -> tuple[Predictor, RunConfig, dict[str, np.ndarray]]:
    text, tensors = read_checkpoint(path)
    cfg = config_mod.parse(text)
    model = Predictor(cfg.model)
    load_state(model, tensors)
    return model, cfg, tensors


def _restore_optimizer(opt: AdamW, model: Predictor, tensors) -> None:
    if "opt.step" not in tensors:
        return
    names = [n for n, _ in model.named_parameters()]
    opt.state = AdamWState([tensors["opt.m." + n].copy() for n in names],
                           [tensors["opt.v." + n].copy() for n in names],
                           int(tensors["opt.step"]))


def train(clips: list[Clip], cfg: RunConfig, *, out_dir: str | Path | None = None,
          resume: str | Path | None = None, stop_at: int | None = None,
          progress: Callable[[int, float], None] | None = None) -> TrainResult:
    """Minimize the weighted loss for ``cfg.train.steps`` steps (or until ``stop_at``).

    With ``out_dir`` the checkpoint (``model.ftdm``) and ``loss.csv`` are
    written there; resuming appends to the existing log.
    """
    tc, mc = cfg.train, cfg.model
    if not clips:
        raise InvalidArgument("training needs at least one clip")
    check_normal_only(clips)
    N = mc.clip_len
    windows = sliding_windows(clips, N + 1)
    if not windows:
        raise InvalidArgument(f"no clip has the {N + 1} frames a training window needs")
    if tc.batch_size < 1 or tc.steps < 1:
        raise InvalidArgument("batch_size and steps must be positive")
    shape = clips[windows[0][0]].frames.shape[1:]
    if shape != (3, mc.height, mc.width):
        raise DataError(f"frames are {shape}, model expects (3, {mc.height}, {mc.width})")

    if resume is not None:
        model, saved_cfg, tensors = load_model(resume)
        if config_mod.dump(saved_cfg) != config_mod.dump(cfg):
            raise InvalidArgument("checkpoint was trained with a different configuration")
    else:
        model, tensors = Predictor(mc), {}
    model.train()
    opt = AdamW(tc.lr, tc.lr_min, tc.steps, tc.beta1, tc.beta2, tc.eps, tc.weight_decay)
    _restore_optimizer(opt, model, tensors)
    start = opt.state.step if opt.state else 0
    end = tc.steps if stop_at is None else min(stop_at, tc.steps)

    params = model.parameters()
    rows = []
    for step in range(start, end):
        picks = [windows[i] for i in batch_positions(step, tc.batch_size, len(windows), tc.seed)]
        batch = np.stack([clips[c].frames[s:s + N + 1] for c, s in picks])
        model.zero_grad()
        with Tape() as tape:
            pred = model(batch[:, :N])
            total, parts = loss_terms(pred, batch[:, N], tc.loss_weights, tc.ssim_multiscale)
            tape.backward(total)
        if not np.isfinite(total.value):
            raise FloatingPointError(f"loss became non-finite at step {step}")
        lr = opt.step([p.value for p in params], [p.grad for p in params])
        rows.append((step, lr, *parts, float(total.value)))
        if progress is not None:
            progress(step, float(total.value))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_training_state(out / "model.ftdm", model, opt, cfg)
        append_loss_csv(out / "loss.csv", rows, fresh=resume is None)
    return TrainResult(model, opt, rows)


def append_loss_csv(path, rows, fresh: bool = True) -> None:
    path = Path(path)
    new = fresh or not path.exists()
    with open(path, "w" if new else "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(LOSS_HEADER)
        for r in rows:
            w.writerow((r[0],) + tuple(repr(float(x)) for x in r[1:]))


def read_loss_csv(path) -> np.ndarray:
    """Loss log as a ``[steps, 6]`` float array."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LOSS_HEADER:
            raise DataError(f"{path}: not a loss log")
        return np.array([[float(x) for x in row] for row in reader if row]).reshape(-1, 6)


def loss_halved(totals, window: int = 10) -> tuple[bool, float, float]:
    """``(final mean < 0.5 * first mean, first mean, final mean)`` over ``window`` steps."""
    t = np.asarray(totals, dtype=np.float64)
    first, last = float(t[:window].mean()), float(t[-window:].mean())
    return last < 0.5 * first, first, last
