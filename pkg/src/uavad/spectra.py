"""Average magnitude spectra of clips and their cross-axis energy share."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument, UndefinedMetric


def luma(frames) -> np.ndarray:
    """Channel mean ``[T, H, W, 3] -> [T, H, W]``; 3-D input passes through."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 3:
        return x
    if x.ndim != 4:
        raise InvalidArgument(f"expected [T, H, W, C] frames, got shape {x.shape}")
    return x.mean(axis=-1)


def avg_spectrum(frames, log: bool = False) -> np.ndarray:
    """Mean over frames of ``|DFT2|`` with DC moved to the centre bin.

    ``frames`` is ``[T, H, W]`` luma (or ``[H, W]`` for a single frame).
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] < 1:
        raise InvalidArgument(f"expected [T, H, W] luma frames, got shape {x.shape}")
    mag = np.abs(np.fft.fft2(x, axes=(1, 2))).mean(axis=0)
    mag = np.fft.fftshift(mag)
    return np.log1p(mag) if log else mag


def axis_band_mask(shape: tuple[int, int], half_width: int = 1) -> np.ndarray:
    """Bins within ``half_width`` of the central row or column (centred layout)."""
    H, W = shape
    cy, cx = H // 2, W // 2
    rows = np.abs(np.arange(H) - cy) <= half_width
    cols = np.abs(np.arange(W) - cx) <= half_width
    return rows[:, None] | cols[None, :]


def axis_energy_ratio(spectrum, half_width: int = 1) -> float:
    """Energy (squared magnitude) in the central cross, DC excluded, over all non-DC energy."""
    s = np.asarray(spectrum, dtype=np.float64)
    if s.ndim != 2:
        raise InvalidArgument(f"expected a 2-D spectrum, got shape {s.shape}")
    e = s ** 2
    H, W = s.shape
    e_dc = e.copy()
    e_dc[H // 2, W // 2] = 0.0
    total = e_dc.sum()
    if total <= 0:
        raise UndefinedMetric("spectrum has no energy outside DC")
    return float(e_dc[axis_band_mask(s.shape, half_width)].sum() / total)
