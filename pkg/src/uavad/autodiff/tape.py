"""Tape-based reverse-mode differentiation.

A :class:`Tape` records every primitive whose inputs need gradients while it
is active (``with Tape() as tape: ...``).  Outside a tape nothing is
recorded, which doubles as inference mode.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import InvalidArgument

_ids = itertools.count()
_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> "Tape | None":
    tapes = _stack()
    return tapes[-1] if tapes else None


class Variable:
    """A float64 array that can carry a gradient."""

    __array_priority__ = 100
    __slots__ = ("value", "grad", "requires_grad", "node_id", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)
        self.name = name

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Variable{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.value

    # Operator sugar; the primitives live in ``ops``.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __pow__(self, p):
        from . import ops
        if p == 2:
            return ops.square(self)
        from ..errors import Unimplemented
        raise Unimplemented(f"power {p!r} has no registered primitive")

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)


@dataclass
class Node:
    op: str
    inputs: tuple[Variable, ...]
    output: Variable
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        tapes = _stack()
        if not tapes or tapes[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        tapes.pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(self, loss: Variable, seed: np.ndarray | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every requires-grad leaf."""
        if seed is None:
            if loss.size != 1:
                raise InvalidArgument(f"backward needs a scalar loss, got shape {loss.shape}")
            seed = np.ones_like(loss.value)
        grads: dict[int, np.ndarray] = {loss.node_id: np.asarray(seed, dtype=np.float64)}
        produced = set()
        for node in reversed(self.nodes):
            produced.add(node.output.node_id)
            g = grads.pop(node.output.node_id, None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for var, gi in zip(node.inputs, in_grads):
                if gi is None or not var.requires_grad:
                    continue
                if gi.shape != var.shape:
                    raise RuntimeError(
                        f"{node.op}: gradient shape {gi.shape} != input shape {var.shape}")
                prev = grads.get(var.node_id)
                grads[var.node_id] = gi if prev is None else prev + gi
        leaves = {}
        for node in self.nodes:
            for var in node.inputs:
                if var.requires_grad and var.node_id not in produced:
                    leaves[var.node_id] = var
        if loss.node_id not in produced and loss.requires_grad:
            leaves[loss.node_id] = loss
        for nid, var in leaves.items():
            g = grads.get(nid)
            if g is None:
                continue
            var.grad = g.copy() if var.grad is None else var.grad + g

    def clear(self) -> None:
        self.nodes.clear()


def record(op: str, inputs: Sequence[Variable], value: np.ndarray,
           backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Variable:
    """Wrap ``value`` in a Variable and register ``backward`` on the active tape."""
    tape = current_tape()
    needs = tape is not None and any(v.requires_grad for v in inputs)
    out = Variable(value, requires_grad=needs)
    if needs:
        tape.record(Node(op, tuple(inputs), out, backward))
    return out
