"""AdamW with a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def cosine_lr(step: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    if total <= 0:
        return lr0
    frac = min(max(step, 0), total) / total
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * frac))


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamWState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class AdamW:
    lr: float = 5e-5
    lr_min: float = 0.0
    total_steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    state: AdamWState | None = field(default=None, repr=False)

    def current_lr(self) -> float:
        step = self.state.step if self.state else 0
        return cosine_lr(step, self.total_steps, self.lr, self.lr_min)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray | None]) -> float:
        """Update ``params`` in place; returns the learning rate used."""
        if self.state is None:
            self.state = AdamWState.zeros_like(params)
        lr = adamw_cosine_step(params, grads, self.state, self.state.step, self.total_steps,
                               self.lr, self.lr_min, self.beta1, self.beta2, self.eps,
                               self.weight_decay)
        return lr


def adamw_cosine_step(params, grads, state: AdamWState, step: int, total: int,
                      lr0: float, lr_min: float = 0.0, beta1: float = 0.9,
                      beta2: float = 0.999, eps: float = 1e-8,
                      weight_decay: float = 0.01) -> float:
    """One decoupled-decay Adam update at schedule position ``step`` (0-based).

    Missing gradients count as zero.  Advances ``state.step`` and returns the
    learning rate applied.
    """
    lr = cosine_lr(step, total, lr0, lr_min)
    t = state.step + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p *= 1.0 - lr * weight_decay
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    state.step = t
    return lr
