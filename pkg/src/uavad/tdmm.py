"""Temporal dilation around STMamba blocks.

``phi(f, eta)`` splits a clip into ``eta`` strided sub-clips
(frames ``t = j mod eta``) stacked along the batch axis as item
``j * B + b``; ``phi_inv`` interleaves them back.  Each rate gets its own
STMamba stack, the restored outputs are summed, and a closing STMamba
fuses the scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Variable, ops
from .errors import InvalidArgument, ShapeError
from .layers import Module
from .ssm import StMamba


def _as_var(f):
    return (f, False) if isinstance(f, Variable) else (Variable(np.asarray(f, dtype=np.float64)), True)


def phi(f, eta: int, split: str = "stride"):
    """``[B, T, ...] -> [eta*B, T/eta, ...]``.

    ``split="block"`` cuts contiguous chunks instead (experimental).
    """
    fv, plain = _as_var(f)
    if fv.ndim != 5:
        raise ShapeError("phi expects [B, T, C, H, W]", fv.shape)
    B, T, C, H, W = fv.shape
    if eta < 1 or T % eta:
        raise InvalidArgument(f"dilation rate eta={eta} does not divide clip length T={T}")
    if split == "stride":
        g = ops.reshape(fv, (B, T // eta, eta, C, H, W))
        g = ops.transpose(g, (2, 0, 1, 3, 4, 5))
    elif split == "block":
        g = ops.transpose(ops.reshape(fv, (B, eta, T // eta, C, H, W)), (1, 0, 2, 3, 4, 5))
    else:
        raise InvalidArgument(f"unknown split {split!r}")
    out = ops.reshape(g, (eta * B, T // eta, C, H, W))
    return out.value if plain else out


def phi_inv(g, eta: int, split: str = "stride"):
    gv, plain = _as_var(g)
    if gv.ndim != 5:
        raise ShapeError("phi_inv expects [eta*B, T/eta, C, H, W]", gv.shape)
    EB, Ts, C, H, W = gv.shape
    if eta < 1 or EB % eta:
        raise InvalidArgument(f"batch {EB} is not divisible by dilation rate eta={eta}")
    B = EB // eta
    x = ops.reshape(gv, (eta, B, Ts, C, H, W))
    if split == "stride":
        x = ops.transpose(x, (1, 2, 0, 3, 4, 5))
    elif split == "block":
        x = ops.transpose(x, (1, 0, 2, 3, 4, 5))
    else:
        raise InvalidArgument(f"unknown split {split!r}")
    out = ops.reshape(x, (B, Ts * eta, C, H, W))
    return out.value if plain else out


@dataclass(frozen=True)
class DilationConfig:
    rates: tuple[int, ...] = (1, 2, 3)
    depth: int = 1
    patch: int = 4
    strategy: str = "pixel,patch"
    share_weights: bool = False
    split: str = "stride"

    def __post_init__(self):
        if not self.rates:
            raise InvalidArgument("at least one dilation rate is required")


class TDMM(Module):
    def __init__(self, channels: int, cfg: DilationConfig, rng: np.random.Generator, **block_kw):
        kw = dict(depth=cfg.depth, patch=cfg.patch, strategy=cfg.strategy, **block_kw)
        if cfg.share_weights:
            shared = StMamba(channels, rng, **kw)
            self.scales = [shared]
        else:
            self.scales = [StMamba(channels, rng, **kw) for _ in cfg.rates]
        self.fusion = StMamba(channels, rng, **kw)
        self.cfg = cfg

    def __call__(self, f: Variable) -> Variable:
        T = f.shape[1]
        for eta in self.cfg.rates:
            if T % eta:
                raise InvalidArgument(f"dilation rate eta={eta} does not divide clip length T={T}")
        acc = None
        for i, eta in enumerate(self.cfg.rates):
            block = self.scales[0 if self.cfg.share_weights else i]
            y = phi_inv(block(phi(f, eta, self.cfg.split)), eta, self.cfg.split)
            acc = y if acc is None else ops.add(acc, y)
        return self.fusion(acc)


def tdmm_forward(f, module: TDMM):
    fv, plain = _as_var(f)
    out = module(fv)
    return out.value if plain else out
