"""Selective state-space core and the multi-scan STMamba block.

Reference paths (``discretize``, ``recurrence``, ``scan_recurrent``,
``kernel_convolve``) are plain numpy and serve as oracles for the compiled
selective scan used inside :class:`StMambaBlock`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Variable, ops
from .autodiff.ops import softplus_np
from .errors import InvalidArgument, ShapeError
from .layers import LayerNorm, Linear, Module, param
from .scan import branch_index


def discretize(A, B, delta):
    """Exact zero-order hold for a diagonal ``A``: returns ``(A_bar, B_bar)``.

    ``B_bar = expm1(delta*A)/A * B``, with the ``A == 0`` limit ``delta*B``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise InvalidArgument("step size delta must be positive")
    x = delta * A
    a_bar = np.exp(x)
    safe = np.where(A == 0, 1.0, A)
    gain = np.where(A == 0, delta, np.expm1(x) / safe)
    return a_bar, gain * B


def recurrence(x, a_bar, b_bar, c):
    """``h_t = a_bar_t * h_{t-1} + b_bar_t * x_t``, ``y_t = sum_n c_t * h_t``, ``h_{-1} = 0``.

    ``x [L, D]``; ``a_bar, b_bar`` broadcast to ``[L, D, N]``; ``c`` to ``[L, N]``.
    A 1-D ``x`` is treated as a single channel and a 1-D result is returned.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    L, D = x.shape
    a_bar = np.asarray(a_bar, dtype=np.float64)
    b_bar = np.asarray(b_bar, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    N = max(a_bar.shape[-1] if a_bar.ndim else 1, b_bar.shape[-1] if b_bar.ndim else 1,
            c.shape[-1] if c.ndim else 1)
    try:
        a_bar = np.broadcast_to(a_bar, (L, D, N))
        b_bar = np.broadcast_to(b_bar, (L, D, N))
        c = np.broadcast_to(c, (L, N))
    except ValueError:
        raise ShapeError("recurrence parameters do not align with the input", x.shape) from None
    h = np.zeros((D, N))
    y = np.empty((L, D))
    for t in range(L):
        h = a_bar[t] * h + b_bar[t] * x[t][:, None]
        y[t] = h @ c[t]
    return y[:, 0] if squeeze else y


@dataclass
class SsmParams:
    """Diagonal ``A [D, N]`` with per-step ``delta [L, D]``, ``B, C [L, N]``."""
    A: np.ndarray
    delta: np.ndarray
    B: np.ndarray
    C: np.ndarray


def scan_recurrent(params: SsmParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    L, D = x.shape
    if params.delta.shape != (L, D) or params.B.shape[0] != L or params.C.shape[0] != L:
        raise ShapeError("per-step parameters do not match sequence", x.shape, params.delta.shape)
    a_bar, b_bar = discretize(params.A[None], params.B[:, None, :], params.delta[:, :, None])
    return recurrence(x, a_bar, b_bar, params.C)


def ssm_kernel(A, B, C, delta, length: int) -> np.ndarray:
    """Impulse response ``K[m] = sum_n C_n A_bar_n**m B_bar_n`` (diagonal A)."""
    a_bar, b_bar = discretize(A, B, delta)
    m = np.arange(length)[:, None]
    return (np.asarray(C) * b_bar * a_bar[None, :] ** m).sum(axis=-1)


def kernel_convolve(A, B, C, delta, x) -> np.ndarray:
    """Time-invariant SSM evaluated as a causal convolution with its kernel.

    ``x`` is ``[L]`` or ``[L, D]``; for ``[L, D]`` input ``A`` may be ``[N]``
    or ``[D, N]`` and ``delta`` a scalar or ``[D]``.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    L, D = x.shape
    A = np.broadcast_to(np.asarray(A, dtype=np.float64), (D, np.shape(A)[-1]))
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (D,))
    y = np.empty((L, D))
    for d in range(D):
        k = ssm_kernel(A[d], B, C, delta[d], L)
        y[:, d] = np.convolve(x[:, d], k)[:L]
    return y[:, 0] if squeeze else y


def selective_project(x, w_x, w_dt, b_dt, d_state: int):
    """Input-dependent ``(delta, B, C)`` from a sequence ``x [L, D]`` (arrays).

    ``w_x [D, R + 2N]`` yields ``(dt_low, B, C)``; ``delta =
    softplus(dt_low @ w_dt + b_dt)`` with ``w_dt [R, D]``.
    """
    x = np.asarray(x, dtype=np.float64)
    proj = x @ w_x
    R = proj.shape[-1] - 2 * d_state
    if R < 0 or w_dt.shape[0] != R:
        raise ShapeError("projection widths inconsistent", w_x.shape, w_dt.shape)
    delta = softplus_np(proj[:, :R] @ w_dt + b_dt)
    return delta, proj[:, R:R + d_state], proj[:, R + d_state:]


def causal_conv1d(x, kernel, bias=None) -> np.ndarray:
    """Depthwise causal convolution of ``x [L, D]`` (arrays).

    ``kernel`` is ``[width]`` (shared) or ``[D, width]``; the last tap is the
    current step.
    """
    x = np.asarray(x, dtype=np.float64)
    L, D = x.shape
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 1:
        kernel = np.broadcast_to(kernel, (D, kernel.size))
    b = None if bias is None else np.asarray(bias, dtype=np.float64)[None]
    out = ops.causal_conv1d(x[None, None], kernel[None], b)
    return out.value[0, 0]


def _inv_softplus(y):
    return y + np.log(-np.expm1(-y))


class StMambaBlock(Module):
    """Pre-norm, X/Z projections, 12 scan branches, SiLU(Z) gating, residual.

    All branches share X and Z; each owns its causal conv, (delta, B, C)
    projections and state matrix.  Branch outputs are returned to canonical
    order and summed before gating.
    """

    def __init__(self, channels: int, rng: np.random.Generator, *, d_state: int = 8,
                 expand: int = 2, d_conv: int = 4, dt_rank: int | None = None,
                 branches: int = 12, conv_silu: bool = True, zero_out: bool = False):
        D = expand * channels
        R = dt_rank or max(1, math.ceil(channels / 16))
        K = branches
        self.channels, self.inner, self.d_state, self.dt_rank = channels, D, d_state, R
        self.conv_silu = conv_silu
        self.norm = LayerNorm(channels)
        self.in_proj = Linear(channels, 2 * D, rng, bias=False)
        bound = 1.0 / math.sqrt(d_conv)
        self.conv_w = param(rng.uniform(-bound, bound, size=(K, D, d_conv)))
        self.conv_b = param(rng.uniform(-bound, bound, size=(K, D)))
        self.x_proj = param(rng.uniform(-1, 1, size=(K, D, R + 2 * d_state)) / math.sqrt(D))
        self.dt_w = param(rng.uniform(-1, 1, size=(K, R, D)) / math.sqrt(R))
        dt = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=(K, D)))
        self.dt_b = param(_inv_softplus(np.maximum(dt, 1e-4)))
        self.A_log = param(np.broadcast_to(np.log(np.arange(1, d_state + 1.0)), (K, D, d_state)))
        self.out_proj = Linear(D, channels, rng, bias=False)
        if zero_out:
            self.out_proj.weight.value[...] = 0.0

    def _branches(self, f: Variable, idx: np.ndarray):
        Bn, T, C, H, W = f.shape
        if C != self.channels:
            raise ShapeError("channel width mismatch", f.shape, (self.channels,))
        L = T * H * W
        if idx.shape != (self.conv_w.shape[0], L):
            raise ShapeError("scan layouts do not match clip size or branch count",
                             idx.shape, (self.conv_w.shape[0], L))
        K, D, N, R = idx.shape[0], self.inner, self.d_state, self.dt_rank
        x = ops.reshape(ops.transpose(f, (0, 1, 3, 4, 2)), (Bn, L, C))
        xz = self.in_proj(self.norm(x))
        X, Z = xz[..., :D], xz[..., D:]
        xs = ops.transpose(ops.gather(X, idx), (1, 0, 2, 3))
        xc = ops.causal_conv1d(xs, self.conv_w, self.conv_b)
        if self.conv_silu:
            xc = ops.silu(xc)
        proj = ops.matmul(xc, ops.reshape(self.x_proj, (K, 1, D, R + 2 * N)))
        dt = ops.softplus(ops.add(ops.matmul(proj[..., :R], ops.reshape(self.dt_w, (K, 1, R, D))),
                                  ops.reshape(self.dt_b, (K, 1, 1, D))))
        A = ops.scale(ops.exp(self.A_log), -1.0)
        y = ops.selective_scan(xc, dt, A, proj[..., R:R + N], proj[..., R + N:])
        return y, Z, (Bn, T, C, H, W)

    def branch_outputs(self, f: Variable, idx: np.ndarray) -> Variable:
        """Per-branch scan outputs ``[K, B, L, D]`` in each branch's own order."""
        return self._branches(f, idx)[0]

    def __call__(self, f: Variable, idx: np.ndarray) -> Variable:
        y, Z, (Bn, T, C, H, W) = self._branches(f, idx)
        L = T * H * W
        summed = ops.scatter_add(ops.transpose(y, (1, 0, 2, 3)), idx, L)
        out = self.out_proj(ops.mul(ops.silu(Z), summed))
        out = ops.transpose(ops.reshape(out, (Bn, T, H, W, C)), (0, 1, 4, 2, 3))
        return ops.add(out, f)


class StMamba(Module):
    """A stack of ``depth`` STMamba blocks sharing one scan configuration."""

    def __init__(self, channels: int, rng: np.random.Generator, depth: int = 1,
                 patch: int = 4, strategy: str = "pixel,patch", **block_kw):
        if depth < 1:
            raise InvalidArgument(f"depth must be >= 1, got {depth}")
        self.blocks = [StMambaBlock(channels, rng, **block_kw) for _ in range(depth)]
        self.patch, self.strategy = patch, strategy

    def __call__(self, f: Variable) -> Variable:
        _, T, _, H, W = f.shape
        idx = branch_index(T, H, W, self.patch, self.strategy)
        for blk in self.blocks:
            f = blk(f, idx)
        return f


def stmamba_forward(f, block: StMambaBlock, layouts) -> np.ndarray | Variable:
    """Run one block with explicit layouts (forward and reversed per layout)."""
    plain = not isinstance(f, Variable)
    fv = Variable(np.asarray(f, dtype=np.float64)) if plain else f
    _, T, _, H, W = fv.shape
    rows = []
    for lay in layouts:
        if lay.dims != (T, H, W):
            raise ShapeError("layout built for a different clip size", lay.dims, (T, H, W))
        rows += [lay.perm, lay.perm[::-1]]
    out = block(fv, np.stack(rows))
    return out.value if plain else out
