"""Minimal reverse-mode autodiff over numpy arrays."""

from . import ops
from .ops import PRIMITIVES, apply
from .tape import Tape, Variable, current_tape, record


def grad_check(fn, params, eps: float = 1e-5, floor: float = 1e-6, entries=None):
    """Compare tape gradients of scalar ``fn()`` against central differences.

    ``entries`` maps a parameter index to the flat positions to probe
    (default: every entry).  Returns the max relative error, where the error
    of one entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    import numpy as np

    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    worst = 0.0
    for i, p in enumerate(params):
        analytic = np.zeros(p.shape) if p.grad is None else p.grad
        positions = range(p.value.size) if entries is None else entries.get(i, ())
        for j in positions:
            at = np.unravel_index(j, p.shape)
            old = p.value[at]
            p.value[at] = old + eps
            up = float(fn().value)
            p.value[at] = old - eps
            down = float(fn().value)
            p.value[at] = old
            num = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[j]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst


def directional_check(fn, params, rng, eps: float = 1e-5, floor: float = 1e-6):
    """Per-parameter directional derivative check along one random unit direction.

    Compares ``<grad, d>`` with ``(fn(p + eps d) - fn(p - eps d)) / 2 eps`` and
    returns the max relative error over ``params``.  Touches every entry of
    every parameter at a cost of two evaluations per tensor.
    """
    import numpy as np

    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        d = rng.standard_normal(p.shape)
        d /= np.linalg.norm(d)
        old = p.value.copy()
        p.value[...] = old + eps * d
        up = float(fn().value)
        p.value[...] = old - eps * d
        down = float(fn().value)
        p.value[...] = old
        num = (up - down) / (2 * eps)
        a = 0.0 if p.grad is None else float(np.sum(p.grad * d))
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst


__all__ = ["Tape", "Variable", "current_tape", "record", "ops", "apply", "PRIMITIVES", "grad_check",
           "directional_check"]
