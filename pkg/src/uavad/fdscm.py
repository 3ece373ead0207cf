"""Frequency-decoupled spatiotemporal correlation.

Two stages over a ``[B, T, C, H, W]`` feature:

1. temporal decoupling: per pixel, weight each temporal frequency
   component by ``l_k**2 * |F_k|**2`` (``l`` the normalized frequency) and
   transform back, which removes the temporal mean and amplifies strong,
   fast components;
2. correlation attention: the circular space-time autocorrelation of each
   ``(b, c)`` slice, computed as the inverse DFT of the power spectrum, is
   used as a multiplicative attention map.

The functions accept numpy arrays (and return arrays) or autodiff
Variables (and return Variables).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Variable, ops
from .errors import InvalidArgument, ShapeError

IMAG_TOL = 1e-9


def normalized_freqs(T: int) -> np.ndarray:
    if T < 1:
        raise InvalidArgument(f"T must be positive, got {T}")
    k = np.arange(T)
    return np.where(k <= T // 2, k, k - T) / T


def _wrap(x):
    return (x, False) if isinstance(x, Variable) else (Variable(np.asarray(x, dtype=np.float64)), True)


def _unwrap(v: Variable, plain: bool):
    return v.value if plain else v


def _complexify(x: Variable) -> Variable:
    re = ops.reshape(x, x.shape + (1,))
    return ops.concat([re, np.zeros(re.shape)], axis=-1)


def _check5(x: Variable, op: str) -> None:
    if x.ndim != 5:
        raise ShapeError(f"{op} expects [B, T, C, H, W]", x.shape)


def _real_part(z: Variable, op: str) -> Variable:
    imag = np.abs(z.value[..., 1]).max(initial=0.0)
    scale = max(1.0, np.abs(z.value[..., 0]).max(initial=0.0))
    if imag > IMAG_TOL * scale:
        raise ArithmeticError(f"{op}: imaginary residue {imag:.3g} exceeds tolerance")
    return z[..., 0]


def temporal_decouple(f):
    f, plain = _wrap(f)
    _check5(f, "temporal_decouple")
    T = f.shape[1]
    l2 = normalized_freqs(T) ** 2
    spec = ops.complex_dft(_complexify(f), axes=(1,))
    power = ops.sum(ops.square(spec), axis=-1, keepdims=True)
    weights = ops.mul(power, l2.reshape(1, T, 1, 1, 1, 1))
    back = ops.complex_dft(ops.mul(spec, weights), axes=(1,), inverse=True)
    return _unwrap(_real_part(back, "temporal_decouple"), plain)


def st_autocorrelation(fp):
    """Circular autocorrelation of each (b, c) slice over (t, s), ``[B, C, T, H*W]``."""
    fp, plain = _wrap(fp)
    _check5(fp, "st_autocorrelation")
    B, T, C, H, W = fp.shape
    x = ops.reshape(ops.transpose(fp, (0, 2, 1, 3, 4)), (B, C, T, H * W))
    spec = ops.complex_dft(_complexify(x), axes=(2, 3))
    psd = ops.sum(ops.square(spec), axis=-1)
    R = ops.complex_dft(_complexify(psd), axes=(2, 3), inverse=True)
    return _unwrap(_real_part(R, "st_autocorrelation"), plain)


def correlate_enhance(fp, R, normalize: bool = True, eps: float = 1e-8):
    """``fp + R_n * fp`` with ``R_n = R / max(|R|, eps)`` per (b, c) slice."""
    fp, plain = _wrap(fp)
    R, _ = _wrap(R)
    _check5(fp, "correlate_enhance")
    B, T, C, H, W = fp.shape
    if R.shape != (B, C, T, H * W):
        raise ShapeError("correlation map does not match feature", R.shape, (B, C, T, H * W))
    if normalize:
        peak = ops.clamp_min(ops.amax(ops.abs(R), axis=(2, 3), keepdims=True), eps)
        R = ops.div(R, peak)
    att = ops.transpose(ops.reshape(R, (B, C, T, H, W)), (0, 2, 1, 3, 4))
    return _unwrap(ops.add(fp, ops.mul(att, fp)), plain)


@dataclass(frozen=True)
class FdscmConfig:
    decouple: bool = True      # temporal frequency decoupling
    correlate: bool = True     # spatiotemporal correlation attention
    raw_correlation: bool = False


def fdscm_forward(f, cfg: FdscmConfig = FdscmConfig()):
    f, plain = _wrap(f)
    _check5(f, "fdscm_forward")
    fp = temporal_decouple(f) if cfg.decouple else f
    out = fp
    if cfg.correlate:
        out = correlate_enhance(fp, st_autocorrelation(fp), normalize=not cfg.raw_correlation)
    return _unwrap(out, plain)
