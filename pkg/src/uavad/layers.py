"""Parameter containers built on the autodiff primitives."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .autodiff import Variable, ops


class Module:
    """Holds parameters (Variables), buffers (arrays) and child modules.

    Names follow attribute definition order, so parameter enumeration is
    deterministic.
    """

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Variable]]:
        for name, val in vars(self).items():
            yield from _walk(val, prefix + name, "param")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, val in vars(self).items():
            if name.startswith("buf_"):
                yield prefix + name, val
            else:
                yield from _walk(val, prefix + name, "buffer")

    def parameters(self) -> list[Variable]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in vars(self).values():
            for m in _children(val):
                yield from m.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _children(val):
    if isinstance(val, Module):
        yield val
    elif isinstance(val, (list, tuple)):
        for v in val:
            yield from _children(v)


def _walk(val, name, what):
    if isinstance(val, Module):
        if what == "param":
            yield from val.named_parameters(name + ".")
        else:
            yield from val.named_buffers(name + ".")
    elif isinstance(val, (list, tuple)):
        for i, v in enumerate(val):
            yield from _walk(v, f"{name}.{i}", what)
    elif what == "param" and isinstance(val, Variable) and val.requires_grad:
        yield name, val


def param(value) -> Variable:
    return Variable(np.array(value, dtype=np.float64, order="C"), requires_grad=True)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Variable:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return param(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = uniform_init(rng, (n_in, n_out), n_in)
        self.bias = uniform_init(rng, (n_out,), n_in) if bias else None

    def __call__(self, x) -> Variable:
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, pad=0):
        self.weight = uniform_init(rng, (c_out, c_in, k, k), c_in * k * k)
        self.bias = uniform_init(rng, (c_out,), c_in * k * k)
        self.stride, self.pad = stride, pad

    def __call__(self, x) -> Variable:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, pad=0):
        self.weight = uniform_init(rng, (c_in, c_out, k, k), c_out * k * k)
        self.bias = uniform_init(rng, (c_out,), c_out * k * k)
        self.stride, self.pad = stride, pad

    def __call__(self, x) -> Variable:
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.weight = param(np.ones(channels))
        self.bias = param(np.zeros(channels))
        self.buf_running_mean = np.zeros(channels)
        self.buf_running_var = np.ones(channels)
        self.momentum, self.eps = momentum, eps

    def __call__(self, x) -> Variable:
        return ops.batch_norm(x, self.weight, self.bias, self.buf_running_mean,
                              self.buf_running_var, self.training, self.momentum, self.eps)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        self.weight = param(np.ones(channels))
        self.bias = param(np.zeros(channels))
        self.eps = eps

    def __call__(self, x) -> Variable:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)
