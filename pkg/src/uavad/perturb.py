"""Robustness perturbations applied to frames in ``[-1, 1]``."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument


def perturb_gaussian(frames, sigma: float, seed: int = 0) -> np.ndarray:
    """Add zero-mean noise with std ``sigma`` given on the 0..255 scale, then clamp."""
    if not sigma >= 0:
        raise InvalidArgument(f"noise sigma must be >= 0, got {sigma}")
    x = np.asarray(frames, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    rng = np.random.default_rng(seed)
    return np.clip(x + rng.normal(0.0, 2.0 * sigma / 255.0, size=x.shape), -1.0, 1.0)


def occluded_count(ratio: float, T: int) -> int:
    """``ratio * T`` rounded half up."""
    return min(T, int(np.floor(ratio * T + 0.5)))


def perturb_occlude(clip, ratio: float, seed: int = 0) -> np.ndarray:
    """Zero ``round(ratio * T)`` distinct, uniformly chosen frames of ``[T, ...]``."""
    if not 0.0 <= ratio <= 1.0:
        raise InvalidArgument(f"occlusion ratio must lie in [0, 1], got {ratio}")
    x = np.array(clip, dtype=np.float64)
    k = occluded_count(ratio, len(x))
    if k:
        rng = np.random.default_rng(seed)
        x[rng.choice(len(x), size=k, replace=False)] = 0.0
    return x
