import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavad.autodiff import Variable, grad_check, ops
from uavad.errors import InvalidArgument, ShapeError
from uavad.scan import build_layouts
from uavad.ssm import (SsmParams, StMamba, StMambaBlock, causal_conv1d, discretize,
                       kernel_convolve, recurrence, scan_recurrent, selective_project,
                       ssm_kernel, stmamba_forward)


def test_discretize_examples():
    a, b = discretize(-1.0, 1.0, math.log(2))
    assert abs(a - 0.5) < 1e-15 and abs(b - 0.5) < 1e-15
    a, b = discretize(-1.0, 1.0, 1.0)
    assert abs(a - math.exp(-1)) < 1e-15 and abs(b - (1 - math.exp(-1))) < 1e-15
    a, b = discretize(-1.0, 1.0, 1e-12)
    assert abs(a - 1) < 1e-11 and abs(b) < 1e-11
    a, b = discretize(0.0, 3.0, 0.5)
    assert a == 1.0 and b == 1.5


def test_discretize_is_not_euler():
    _, b = discretize(-2.0, 1.0, 0.5)
    assert abs(b - 0.5) > 0.1
    assert abs(b - (1 - math.exp(-1)) / 2) < 1e-15


def test_discretize_rejects_nonpositive_step():
    with pytest.raises(InvalidArgument):
        discretize(-1.0, 1.0, 0.0)
    with pytest.raises(InvalidArgument):
        discretize(-1.0, 1.0, np.array([0.1, -0.1]))


def test_recurrence_examples(rng):
    x = rng.normal(size=7)
    assert np.array_equal(recurrence(x, 0.0, 1.0, 1.0), x)
    assert np.allclose(recurrence([1.0, 0.0, 0.0], 0.5, 1.0, 1.0), [1, 0.5, 0.25])
    assert np.all(recurrence(np.zeros(5), 0.9, 1.0, 1.0) == 0)
    with pytest.raises(ShapeError):
        recurrence(np.zeros((4, 2)), np.zeros((3, 2, 1)), 1.0, 1.0)


def test_scan_recurrent_length_mismatch():
    p = SsmParams(-np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 3)), np.ones((4, 3)))
    with pytest.raises(ShapeError):
        scan_recurrent(p, np.zeros((5, 2)))


@given(st.integers(1, 64), st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_recurrence_kernel_duality(L, N, seed):
    rng = np.random.default_rng(seed)
    A = -rng.uniform(0.1, 3.0, size=N)
    B, C = rng.normal(size=N), rng.normal(size=N)
    delta = rng.uniform(0.01, 1.0)
    x = rng.normal(size=(L, 2))
    p = SsmParams(np.tile(A, (2, 1)), np.full((L, 2), delta), np.tile(B, (L, 1)), np.tile(C, (L, 1)))
    assert np.max(np.abs(scan_recurrent(p, x) - kernel_convolve(A, B, C, delta, x))) < 1e-9


def test_kernel_examples(rng):
    A, B, C = -np.array([1.0, 2.0, 3.0]), rng.normal(size=3), rng.normal(size=3)
    imp = np.zeros(10)
    imp[0] = 1
    assert np.allclose(kernel_convolve(A, B, C, 0.3, imp), ssm_kernel(A, B, C, 0.3, 10), atol=1e-15)
    a_bar, b_bar = discretize(A, B, 0.3)
    K = ssm_kernel(A, B, C, 0.3, 5)
    for m in range(5):
        assert abs(K[m] - np.sum(C * a_bar ** m * b_bar)) < 1e-15
    # A_bar == 0 in the limit: an extremely negative A
    K = ssm_kernel(np.array([-1e6]), np.array([2.0]), np.array([1.5]), 1.0, 4)
    assert K[0] == pytest.approx(1.5 * 2.0 / 1e6) and np.all(K[1:] == 0)


def test_impulse_response_decays():
    K = ssm_kernel(-np.array([0.5]), np.array([1.0]), np.array([1.0]), 0.2, 30)
    assert np.all(np.diff(np.abs(K)) < 0)


def test_selective_project(rng):
    D, N, R, L = 4, 3, 2, 5
    w_x, w_dt = rng.normal(size=(D, R + 2 * N)), rng.normal(size=(R, D))
    delta, B, C = selective_project(np.zeros((L, D)), w_x, w_dt, np.zeros(D), N)
    assert np.allclose(delta, math.log(2), atol=1e-15)
    delta, B, C = selective_project(rng.normal(size=(L, D)) * 5, w_x, w_dt, rng.normal(size=D), N)
    assert np.all(delta > 0) and B.shape == (L, N) and C.shape == (L, N)
    with pytest.raises(ShapeError):
        selective_project(np.zeros((L, D)), w_x, rng.normal(size=(R + 1, D)), np.zeros(D), N)


def test_causal_conv1d(rng):
    x = rng.normal(size=(9, 3))
    assert np.array_equal(causal_conv1d(x, [0, 0, 0, 1.0]), x)
    delayed = causal_conv1d(x, [0, 0, 1.0, 0])
    assert np.all(delayed[0] == 0) and np.array_equal(delayed[1:], x[:-1])
    k = rng.normal(size=(3, 4))
    padded = np.vstack([np.zeros((3, 3)), x])
    oracle = np.array([[padded[t:t + 4, d] @ k[d] for d in range(3)] for t in range(9)])
    assert np.max(np.abs(causal_conv1d(x, k) - oracle)) < 1e-14


def small_block(rng, C=2, **kw):
    return StMambaBlock(C, rng, d_state=3, **kw)


def test_block_shape_and_a_init(rng):
    f = rng.normal(size=(1, 6, 8, 8, 8))
    blk = StMambaBlock(8, rng)
    assert stmamba_forward(f, blk, build_layouts(6, 8, 8, 4)).shape == f.shape
    A = -np.exp(blk.A_log.value)
    assert np.allclose(A[0, 0], -np.arange(1, 9)) and np.all(A < 0)


def test_block_zero_output_is_identity(rng):
    f = rng.normal(size=(1, 2, 2, 4, 4))
    blk = small_block(rng, zero_out=True)
    assert np.array_equal(stmamba_forward(f, blk, build_layouts(2, 4, 4, 2)), f)


def test_block_layout_mismatch(rng):
    blk = small_block(rng)
    with pytest.raises(ShapeError):
        stmamba_forward(rng.normal(size=(1, 2, 2, 4, 4)), blk, build_layouts(3, 4, 4, 2))
    with pytest.raises(ShapeError):
        stmamba_forward(rng.normal(size=(1, 2, 3, 4, 4)), blk, build_layouts(2, 4, 4, 2))


def test_branch_causality(rng):
    blk = small_block(rng)
    lays = build_layouts(2, 4, 4, 2)
    idx = np.stack([r for l in lays for r in (l.perm, l.perm[::-1])])
    f = rng.normal(size=(1, 2, 2, 4, 4))
    base = blk.branch_outputs(Variable(f), idx).value
    for j in (0, 13, 31):
        g = f.copy()
        t, h, w = np.unravel_index(j, (2, 4, 4))
        g[0, t, :, h, w] += [1.0, -0.5]
        out = blk.branch_outputs(Variable(g), idx).value
        for k in range(12):
            p = int(np.flatnonzero(idx[k] == j)[0])
            assert np.array_equal(out[k, :, :p], base[k, :, :p])
            assert not np.array_equal(out[k, :, p], base[k, :, p])


def test_block_gradcheck(rng):
    blk = small_block(rng)
    f = Variable(rng.normal(size=(1, 2, 2, 4, 4)), requires_grad=True)
    lays = build_layouts(2, 4, 4, 2)
    w = rng.normal(size=f.shape)
    fn = lambda: ops.sum(ops.mul(stmamba_forward(f, blk, lays), w))
    params = [f] + blk.parameters()
    entries = {i: rng.choice(p.value.size, size=min(p.value.size, 12), replace=False)
               for i, p in enumerate(params)}
    assert grad_check(fn, params, entries=entries) < 1e-3


def test_stack_depth(rng):
    with pytest.raises(InvalidArgument):
        StMamba(2, rng, depth=0)
    st_ = StMamba(2, rng, depth=2, patch=2, d_state=3, zero_out=True)
    f = rng.normal(size=(1, 2, 2, 4, 4))
    assert len(st_.blocks) == 2
    assert np.array_equal(st_(Variable(f)).value, f)
