import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def direct_dft(x, inverse=False):
    """O(N^2) reference DFT of a vector."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    k = np.arange(n)
    sign = 1 if inverse else -1
    m = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    y = m @ x
    return y / n if inverse else y


def direct_dft2(x, inverse=False):
    x = np.asarray(x, dtype=complex)
    T, S = x.shape
    out = np.zeros((T, S), dtype=complex)
    sign = 1 if inverse else -1
    for a in range(T):
        for b in range(S):
            acc = 0
            for t in range(T):
                for s in range(S):
                    acc += x[t, s] * np.exp(sign * 2j * np.pi * (a * t / T + b * s / S))
            out[a, b] = acc
    return out / (T * S) if inverse else out


def numeric_grad(fn, x, eps=1e-5):
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = fn()
        flat[i] = old - eps
        down = fn()
        flat[i] = old
        gf[i] = (up - down) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one criterion, print its line, and fail the test if it did not hold."""
    def record(key, ok, detail):
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"\n{key} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"{key}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<5} {'PASS' if ok else 'FAIL'}  {detail}")
