"""Compiled selective-scan kernels (forward and reverse).

The forward pass keeps every hidden state when a backward pass will follow;
the reverse sweep reads them instead of recomputing.
"""

import math

import numba
import numpy as np

_SERIES_CUTOFF = 1e-3


@numba.njit(cache=True, inline="always")
def _zoh_terms(dt, a):
    # returns exp(dt*a), expm1(dt*a)/a and its derivative in a, from one expm1
    x = dt * a
    if abs(x) < _SERIES_CUTOFF:
        gain = dt * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
        gain_da = dt * dt * (0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0)
        return math.exp(x), gain, gain_da
    em = math.expm1(x)
    da = em + 1.0
    return da, em / a, (x * da - em) / (a * a)


@numba.njit(cache=True)
def scan_forward(u, delta, A, B, C, save_states):
    """Returns ``y`` and, if ``save_states``, the post-step states ``[K, Bt, L, D, N]``."""
    K, Bt, L, D = u.shape
    N = A.shape[2]
    y = np.zeros((K, Bt, L, D))
    if save_states:
        Hs = np.zeros((K, Bt, L, D, N))
    else:
        Hs = np.zeros((0, 0, 0, 0, 0))
    h = np.zeros((D, N))
    for k in range(K):
        for b in range(Bt):
            h[:, :] = 0.0
            for t in range(L):
                for d in range(D):
                    dt = delta[k, b, t, d]
                    ut = u[k, b, t, d]
                    acc = 0.0
                    for n in range(N):
                        da, gain, _ = _zoh_terms(dt, A[k, d, n])
                        hn = da * h[d, n] + gain * B[k, b, t, n] * ut
                        h[d, n] = hn
                        acc += hn * C[k, b, t, n]
                    y[k, b, t, d] = acc
                if save_states:
                    Hs[k, b, t] = h
    return y, Hs


@numba.njit(cache=True)
def scan_backward(u, delta, A, B, C, Hs, gy):
    K, Bt, L, D = u.shape
    N = A.shape[2]
    gu = np.zeros_like(u)
    gdelta = np.zeros_like(delta)
    gA = np.zeros_like(A)
    gB = np.zeros_like(B)
    gC = np.zeros_like(C)
    gh = np.zeros((D, N))
    for k in range(K):
        for b in range(Bt):
            gh[:, :] = 0.0
            for t in range(L - 1, -1, -1):
                for d in range(D):
                    g_y = gy[k, b, t, d]
                    dt = delta[k, b, t, d]
                    ut = u[k, b, t, d]
                    acc_u = 0.0
                    acc_dt = 0.0
                    for n in range(N):
                        a = A[k, d, n]
                        bn = B[k, b, t, n]
                        h_prev = Hs[k, b, t - 1, d, n] if t > 0 else 0.0
                        gC[k, b, t, n] += g_y * Hs[k, b, t, d, n]
                        g = gh[d, n] + g_y * C[k, b, t, n]
                        da, e, e_da = _zoh_terms(dt, a)
                        g_da = g * h_prev
                        g_e = g * bn * ut
                        gB[k, b, t, n] += g * e * ut
                        acc_u += g * e * bn
                        acc_dt += g_da * da * a + g_e * da
                        gA[k, d, n] += g_da * da * dt + g_e * e_da
                        gh[d, n] = g * da
                    gu[k, b, t, d] = acc_u
                    gdelta[k, b, t, d] = acc_dt
    return gu, gdelta, gA, gB, gC
