"""Dense float64 tensors and discrete Fourier transforms.

Feature tensors are plain C-contiguous ``float64`` numpy arrays in the
canonical video order ``[B, T, C, H, W]`` (W fastest).  Spectra are
``complex128`` arrays.  The helpers here add the shape checks and error
types the rest of the package relies on.

Transform conventions: the forward DFT uses ``exp(-2j*pi*k*t/N)`` with no
scaling, the inverse carries the full ``1/N`` factor.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import InvalidArgument, ShapeError

FeatureTensor = np.ndarray
ComplexSpectrum = np.ndarray


def as_feature(x, *, ndim: int | None = None) -> FeatureTensor:
    """Coerce to a contiguous float64 array, checking rank and finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-axis tensor, got {arr.ndim} axes", arr.shape)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("tensor contains non-finite values")
    return arr


def dft1(x, inverse: bool = False) -> ComplexSpectrum:
    """1-D DFT of a complex vector."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ShapeError("dft1 expects a vector", x.shape)
    if x.size == 0:
        raise InvalidArgument("dft1 of an empty vector")
    return np.fft.ifft(x) if inverse else np.fft.fft(x)


def dft2(x, inverse: bool = False) -> ComplexSpectrum:
    """2-D DFT of a ``T x S`` matrix; the inverse is normalized by ``1/(T*S)``."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise ShapeError("dft2 expects a matrix", x.shape)
    if 0 in x.shape:
        raise InvalidArgument(f"dft2 with a zero-sized axis {x.shape}")
    f = np.fft.ifft if inverse else np.fft.fft
    return f(f(x, axis=1), axis=0)


def dft(x, axes: Sequence[int], inverse: bool = False) -> ComplexSpectrum:
    """Separable DFT over several axes of an n-d array."""
    x = np.asarray(x, dtype=np.complex128)
    for ax in axes:
        if x.shape[ax] == 0:
            raise InvalidArgument(f"DFT over zero-sized axis {ax}")
    f = np.fft.ifftn if inverse else np.fft.fftn
    return f(x, axes=tuple(axes))


def reshape(x: FeatureTensor, shape: Sequence[int]) -> FeatureTensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError("cannot reshape", x.shape, shape)
    return x.reshape(shape)


def permute_axes(x: FeatureTensor, order: Sequence[int]) -> FeatureTensor:
    order = tuple(order)
    if sorted(order) != list(range(x.ndim)):
        raise ShapeError(f"invalid axis order {order} for tensor", x.shape)
    return np.ascontiguousarray(x.transpose(order))


def inverse_order(order: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argsort(order))


def slice_axis(x: FeatureTensor, axis: int, start: int, stop: int) -> FeatureTensor:
    if not 0 <= start <= stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range on axis {axis}", x.shape)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    return x[tuple(idx)].copy()


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError("elementwise operands differ in shape", a.shape, b.shape)


def add(a: FeatureTensor, b: FeatureTensor) -> FeatureTensor:
    _check_same(a, b)
    return a + b


def mul(a: FeatureTensor, b: FeatureTensor) -> FeatureTensor:
    _check_same(a, b)
    return a * b


def scale(a: FeatureTensor, s: float) -> FeatureTensor:
    return a * float(s)


def add_scalar(a: FeatureTensor, s: float) -> FeatureTensor:
    return a + float(s)
