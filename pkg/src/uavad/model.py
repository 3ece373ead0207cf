"""Future-frame predictor: conv pyramid encoder, per-scale frequency and
Mamba branches, temporal aggregation, transposed-conv decoder.

Checkpoint format (little-endian)::

    b"FTDM" | u32 version | u32 len | config text (utf-8)
    u32 count | count x (u32 name_len | name | u32 rank | rank x u64 dim | f64 payload)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Variable, ops
from .config import ModelConfig
from .errors import DataError, InvalidArgument, ShapeError
from .fdscm import FdscmConfig, fdscm_forward
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Linear, Module
from .tdmm import TDMM, DilationConfig

MAGIC = b"FTDM"
FORMAT_VERSION = 1


def channel_linear(x: Variable, lin: Linear) -> Variable:
    """Apply ``lin`` over the channel axis of ``[B, T, C, H, W]``."""
    y = lin(ops.transpose(x, (0, 1, 3, 4, 2)))
    return ops.transpose(y, (0, 1, 4, 2, 3))


class Encoder(Module):
    """Per-frame pyramid: 2x average pool, then four stride-2 conv/BN/ReLU stages."""

    def __init__(self, channels, rng):
        c_prev = 3
        self.convs, self.norms = [], []
        for c in channels:
            self.convs.append(Conv2d(c_prev, c, 3, rng, stride=2, pad=1))
            self.norms.append(BatchNorm2d(c))
            c_prev = c

    def __call__(self, clip: Variable) -> list[Variable]:
        B, T, C, H, W = clip.shape
        if H % 32 or W % 32:
            raise InvalidArgument(f"frame size {H}x{W} is not divisible by 32")
        x = ops.reshape(clip, (B * T, C, H // 2, 2, W // 2, 2))
        x = ops.mean(x, axis=(3, 5))
        feats = []
        for conv, bn in zip(self.convs, self.norms):
            x = ops.relu(bn(conv(x)))
            feats.append(ops.reshape(x, (B, T) + x.shape[1:]))
        return feats


class TemporalAggregate(Module):
    """``[B, T, C, H, W] -> [B, C, H, W]``: stack frames on channels, project back."""

    def __init__(self, T: int, C: int, rng):
        self.proj = Linear(T * C, C, rng)

    def __call__(self, x: Variable) -> Variable:
        B, T, C, H, W = x.shape
        y = ops.reshape(ops.transpose(x, (0, 3, 4, 1, 2)), (B, H, W, T * C))
        return ops.transpose(self.proj(y), (0, 3, 1, 2))


class Decoder(Module):
    def __init__(self, channels, rng):
        c1, c2, c3, c4 = channels
        self.up4 = ConvTranspose2d(c4, c3, 4, rng, stride=2, pad=1)
        self.up3 = ConvTranspose2d(c3, c2, 4, rng, stride=2, pad=1)
        self.bn3 = BatchNorm2d(c2)
        self.up2 = ConvTranspose2d(c2, c1, 4, rng, stride=2, pad=1)
        self.bn2 = BatchNorm2d(c1)
        self.up1 = ConvTranspose2d(c1, c1, 4, rng, stride=2, pad=1)
        self.bn1 = BatchNorm2d(c1)
        # the head's first Up keeps resolution so the output matches the input size
        self.head_refine = ConvTranspose2d(c1, c1, 3, rng, stride=1, pad=1)
        self.head_out = ConvTranspose2d(c1, 3, 4, rng, stride=2, pad=1)

    def __call__(self, F: list[Variable], f: list[Variable]) -> Variable:
        for i in range(3):
            if F[i].shape[2] != 2 * F[i + 1].shape[2] or F[i].shape != f[i].shape:
                raise ShapeError("decoder scales are inconsistent", F[i].shape, F[i + 1].shape)
        up = self.up4(ops.add(f[3], F[3]))
        for i, (conv, bn) in zip((2, 1, 0), ((self.up3, self.bn3), (self.up2, self.bn2),
                                             (self.up1, self.bn1))):
            up = ops.relu(bn(conv(ops.add(ops.add(f[i], F[i]), up))))
        return ops.tanh(self.head_out(self.head_refine(up)))


class Predictor(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.cfg = cfg
        chans = cfg.channels
        self.encoder = Encoder(chans, rng)
        self.fdscm_cfg = FdscmConfig(cfg.tfd, cfg.stc, cfg.raw_correlation)
        dil = DilationConfig(cfg.active_rates, cfg.depth, cfg.patch, cfg.scan_strategy,
                             cfg.share_dilation_weights, cfg.dilation_split)
        block_kw = dict(d_state=cfg.d_state, expand=cfg.expand, conv_silu=cfg.conv_silu)
        self.tdmm = [TDMM(c, dil, rng, **block_kw) for c in chans] if cfg.stm else []
        self.fuse = ([Linear(2 * c, c, rng) for c in chans]
                     if cfg.topology == "parallel" else [])
        T = cfg.clip_len
        self.agg_main = [TemporalAggregate(T, c, rng) for c in chans]
        self.agg_skip = [TemporalAggregate(T, c, rng) for c in chans]
        self.decoder = Decoder(chans, rng)

    def fdscm(self, f: Variable) -> Variable:
        return fdscm_forward(f, self.fdscm_cfg) if self.cfg.fdscm_on else f

    def mamba(self, i: int, f: Variable) -> Variable:
        return self.tdmm[i](f) if self.cfg.stm else f

    def scale_features(self, i: int, f: Variable) -> Variable:
        if self.cfg.topology == "cascaded":
            return self.mamba(i, self.fdscm(f))
        return fuse_branches(self.fdscm(f), self.mamba(i, f), self.fuse[i])

    def __call__(self, clip) -> Variable:
        clip = clip if isinstance(clip, Variable) else Variable(np.asarray(clip, dtype=np.float64))
        if clip.ndim != 5 or clip.shape[1] != self.cfg.clip_len or clip.shape[2] != 3:
            raise ShapeError(f"expected [B, {self.cfg.clip_len}, 3, H, W] input", clip.shape)
        feats = self.encoder(clip)
        F = [self.agg_main[i](self.scale_features(i, f)) for i, f in enumerate(feats)]
        skips = [self.agg_skip[i](f) for i, f in enumerate(feats)]
        return self.decoder(F, skips)


def fuse_branches(fb: Variable, ft: Variable, proj: Linear) -> Variable:
    """Concatenate the two branch outputs on channels and project back to ``C``."""
    if fb.shape != ft.shape:
        raise ShapeError("branch outputs differ in shape", fb.shape, ft.shape)
    return channel_linear(ops.concat([fb, ft], axis=2), proj)


def predict_next(model: Predictor, clip) -> np.ndarray:
    """Predict frame ``N+1`` from ``N`` frames in inference mode (no tape)."""
    was = model.training
    model.eval()
    try:
        return model(clip).value
    finally:
        model.train(was)


# ----------------------------------------------------------------- checkpoints

def state_dict(model: Module) -> dict[str, np.ndarray]:
    out = {name: p.value for name, p in model.named_parameters()}
    out.update({"buffer." + name: b for name, b in model.named_buffers()})
    return out


def load_state(model: Module, tensors: dict[str, np.ndarray]) -> None:
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    missing = [n for n in params if n not in tensors] + \
        ["buffer." + n for n in buffers if "buffer." + n not in tensors]
    if missing:
        raise DataError(f"checkpoint is missing tensors: {missing[:5]}")
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            raise ShapeError(f"checkpoint tensor {name}", tensors[name].shape, p.shape)
        p.value[...] = tensors[name]
    for name, b in buffers.items():
        b[...] = tensors["buffer." + name]


def write_checkpoint(path: str | Path, config_text: str, tensors: dict[str, np.ndarray]) -> None:
    cfg = config_text.encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg,
              struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8", order="C")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> tuple[str, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        config_text = data[pos:pos + n].decode("utf-8")
        pos += n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + ln].decode("utf-8")
            pos += ln
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            size = int(np.prod(shape)) if rank else 1
            tensors[name] = np.frombuffer(data, "<f8", size, pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, ValueError) as e:
        raise DataError(f"{path}: truncated or corrupt checkpoint ({e})") from None
    return config_text, tensors
