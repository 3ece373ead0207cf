"""Prediction losses: intensity (MSE), gradient difference, and SSIM.

All three average over elements, so the weights stay meaningful across
resolutions.  Inputs are ``[B, C, H, W]`` Variables or arrays in ``[-1, 1]``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .autodiff import Variable, ops
from .errors import InvalidArgument, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
DYNAMIC_RANGE = 2.0


def _pair(pred, target) -> tuple[Variable, Variable]:
    p = pred if isinstance(pred, Variable) else Variable(pred)
    t = target if isinstance(target, Variable) else Variable(target)
    if p.shape != t.shape:
        raise ShapeError("prediction and target differ in shape", p.shape, t.shape)
    return p, t


def loss_intensity(pred, target) -> Variable:
    p, t = _pair(pred, target)
    return ops.mean(ops.square(ops.sub(p, t)))


def loss_gradient(pred, target) -> Variable:
    """Mean over elements of ``| |dY_hat| - |dY| |`` for vertical and horizontal
    forward differences."""
    p, t = _pair(pred, target)
    if p.ndim < 2 or p.shape[-1] < 2 or p.shape[-2] < 2:
        raise InvalidArgument(f"gradient loss needs H, W >= 2, got {p.shape}")
    n = p.size
    total = None
    for axis in (-2, -1):
        lo = [slice(None)] * p.ndim
        hi = [slice(None)] * p.ndim
        lo[axis], hi[axis] = slice(None, -1), slice(1, None)
        dp = ops.abs(ops.sub(p[tuple(hi)], p[tuple(lo)]))
        dt = ops.abs(ops.sub(t[tuple(hi)], t[tuple(lo)]))
        term = ops.sum(ops.abs(ops.sub(dp, dt)))
        total = term if total is None else ops.add(total, term)
    return ops.scale(total, 1.0 / n)


@lru_cache(maxsize=4)
def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    w = np.outer(g, g)
    w.setflags(write=False)
    return w


def _ssim_map(x: Variable, y: Variable, dynamic_range: float) -> Variable:
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    B, C, H, W = x.shape
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        # global statistics per image and channel
        def stat(v):
            return ops.mean(v, axis=(2, 3))
    else:
        win = Variable(gaussian_window()[None, None])

        def stat(v):
            flat = ops.reshape(v, (B * C, 1, H, W))
            return ops.conv2d(flat, win)
    mx, my = stat(x), stat(y)
    sxx = ops.sub(stat(ops.square(x)), ops.square(mx))
    syy = ops.sub(stat(ops.square(y)), ops.square(my))
    sxy = ops.sub(stat(ops.mul(x, y)), ops.mul(mx, my))
    num = ops.mul(ops.add(ops.scale(ops.mul(mx, my), 2.0), c1), ops.add(ops.scale(sxy, 2.0), c2))
    den = ops.mul(ops.add(ops.add(ops.square(mx), ops.square(my)), c1),
                  ops.add(ops.add(sxx, syy), c2))
    return ops.div(num, den)


def _avg_pool2(v: Variable) -> Variable:
    B, C, H, W = v.shape
    v = v[:, :, :H // 2 * 2, :W // 2 * 2]
    return ops.mean(ops.reshape(v, (B, C, H // 2, 2, W // 2, 2)), axis=(3, 5))


def loss_ssim(pred, target, multiscale: bool = False, levels: int = 3,
              dynamic_range: float = DYNAMIC_RANGE) -> Variable:
    """``1 - mean SSIM``; ``multiscale`` averages the loss over ``levels`` 2x pyramids."""
    p, t = _pair(pred, target)
    if p.ndim != 4:
        raise ShapeError("SSIM expects [B, C, H, W]", p.shape)
    terms = []
    for lvl in range(levels if multiscale else 1):
        if lvl:
            if min(p.shape[2:]) < 2:
                break
            p, t = _avg_pool2(p), _avg_pool2(t)
        terms.append(ops.mean(_ssim_map(p, t, dynamic_range)))
    s = terms[0]
    for extra in terms[1:]:
        s = ops.add(s, extra)
    return ops.add(ops.scale(s, -1.0 / len(terms)), 1.0)


def check_weights(weights) -> tuple[float, float, float]:
    w = tuple(float(x) for x in weights)
    if len(w) != 3:
        raise InvalidArgument(f"expected three loss weights, got {len(w)}")
    if any(x < 0 or not np.isfinite(x) for x in w):
        raise InvalidArgument(f"loss weights must be finite and non-negative, got {w}")
    if not any(w):
        raise InvalidArgument("at least one loss weight must be positive")
    return w


def loss_terms(pred, target, weights=(1.0, 1.0, 1.0), multiscale: bool = False):
    """Returns ``(total, (l_int, l_grl, l_ssim))``; zero-weight terms stay out of the graph."""
    w = check_weights(weights)
    p, t = _pair(pred, target)
    fns = (loss_intensity, loss_gradient, lambda a, b: loss_ssim(a, b, multiscale))
    parts, total = [], None
    for wi, fn in zip(w, fns):
        if wi:
            term = fn(p, t)
            total = ops.scale(term, wi) if total is None else ops.add(total, ops.scale(term, wi))
        else:
            term = fn(Variable(p.value), t)
        parts.append(term)
    return total, tuple(float(x.value) for x in parts)


def loss_total(pred, target, weights=(1.0, 1.0, 1.0), multiscale: bool = False) -> Variable:
    return loss_terms(pred, target, weights, multiscale)[0]
