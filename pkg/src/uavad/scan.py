"""Serialization orders for spatiotemporal scanning.

A layout is a permutation ``perm`` of the flattened clip: sequence position
``i`` reads the canonical ``(t, h, w)`` flat index ``perm[i]``
(``t*H*W + h*W + w``).  Temporal-first (TF) layouts concatenate whole
frames over time; spatial-first (SF) layouts concatenate per-patch
space-time blocks, time outer and pixels inner within each block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument, ShapeError

TF_KINDS = ("TF-row", "TF-col")
SF_KINDS = ("SF-rr", "SF-rc", "SF-cr", "SF-cc")
# Experimental: one time-contiguous trajectory per pixel.
PIXEL_TRAJECTORY = "PX-traj"

# (temporal-first granularity, spatial-first granularity) as in the scan ablation.
SCAN_STRATEGIES = {
    "pixel,patch": ("pixel", "patch"),
    "patch,pixel": ("patch", "pixel"),
    "pixel,pixel": ("pixel", "pixel"),
    "patch,patch": ("patch", "patch"),
}


@dataclass(frozen=True)
class ScanLayout:
    perm: np.ndarray
    kind: str
    dims: tuple[int, int, int]
    patch: int | None = None

    @property
    def length(self) -> int:
        return self.perm.size

    def reversed(self) -> "ScanLayout":
        return ScanLayout(self.perm[::-1].copy(), self.kind + "/rev", self.dims, self.patch)

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv


def _flat(t, h, w, H, W):
    return (t * H + h) * W + w


def _check_dims(T, H, W):
    if min(T, H, W) < 1:
        raise InvalidArgument(f"scan dimensions must be positive, got T={T}, H={H}, W={W}")


def _pixel_order(H, W, order):
    hh, ww = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    if order == "col":
        hh, ww = hh.T, ww.T
    return hh.reshape(-1), ww.reshape(-1)


def build_tf_layouts(T: int, H: int, W: int) -> list[ScanLayout]:
    """Row-major and column-major frame flattening, concatenated over time."""
    _check_dims(T, H, W)
    out = []
    for kind, order in zip(TF_KINDS, ("row", "col")):
        hh, ww = _pixel_order(H, W, order)
        t = np.repeat(np.arange(T), H * W)
        perm = _flat(t, np.tile(hh, T), np.tile(ww, T), H, W)
        out.append(ScanLayout(perm.astype(np.intp), kind, (T, H, W)))
    return out


def _patch_blocks(T, H, W, P, patch_order, pixel_order):
    if H % P:
        raise InvalidArgument(f"patch size {P} does not divide height H={H}")
    if W % P:
        raise InvalidArgument(f"patch size {P} does not divide width W={W}")
    ph, pw = _pixel_order(H // P, W // P, patch_order)
    qh, qw = _pixel_order(P, P, pixel_order)
    seq = []
    for bh, bw in zip(ph, pw):
        for t in range(T):
            seq.append(_flat(t, bh * P + qh, bw * P + qw, H, W))
    return np.concatenate(seq).astype(np.intp)


def build_sf_layouts(T: int, H: int, W: int, P: int) -> list[ScanLayout]:
    """Patch order {row, col} x within-patch pixel order {row, col}."""
    _check_dims(T, H, W)
    if P < 1:
        raise InvalidArgument(f"patch size must be positive, got {P}")
    out = []
    for kind in SF_KINDS:
        po = "row" if kind[3] == "r" else "col"
        qo = "row" if kind[4] == "r" else "col"
        out.append(ScanLayout(_patch_blocks(T, H, W, P, po, qo), kind, (T, H, W), P))
    return out


def build_patch_tf_layouts(T: int, H: int, W: int, P: int) -> list[ScanLayout]:
    """Temporal-first at patch granularity: per frame, patches in order, pixels within."""
    _check_dims(T, H, W)
    out = []
    for kind, order in zip(TF_KINDS, ("row", "col")):
        frame0 = _patch_blocks(1, H, W, P, order, order)
        perm = np.concatenate([frame0 + t * H * W for t in range(T)])
        out.append(ScanLayout(perm.astype(np.intp), kind + "/patch", (T, H, W), P))
    return out


def build_pixel_trajectory_layout(T: int, H: int, W: int) -> ScanLayout:
    """Per-pixel time series concatenated in row-major pixel order (experimental)."""
    _check_dims(T, H, W)
    hh, ww = _pixel_order(H, W, "row")
    t = np.tile(np.arange(T), H * W)
    perm = _flat(t, np.repeat(hh, T), np.repeat(ww, T), H, W)
    return ScanLayout(perm.astype(np.intp), PIXEL_TRAJECTORY, (T, H, W))


def effective_patch(H: int, W: int, P: int) -> int:
    """Largest patch size <= P dividing both H and W."""
    for p in range(min(P, H, W), 0, -1):
        if H % p == 0 and W % p == 0:
            return p
    return 1


def build_layouts(T: int, H: int, W: int, P: int = 4, strategy: str = "pixel,patch") -> list[ScanLayout]:
    """The six layouts used by one STMamba block, for a scan strategy."""
    try:
        tf_gran, sf_gran = SCAN_STRATEGIES[strategy]
    except KeyError:
        raise InvalidArgument(
            f"unknown scan strategy {strategy!r}; choose from {sorted(SCAN_STRATEGIES)}") from None
    p = effective_patch(H, W, P)
    tf = build_tf_layouts(T, H, W) if tf_gran == "pixel" else build_patch_tf_layouts(T, H, W, p)
    sf = build_sf_layouts(T, H, W, p if sf_gran == "patch" else 1)
    return tf + sf


@lru_cache(maxsize=128)
def branch_index(T: int, H: int, W: int, P: int = 4, strategy: str = "pixel,patch") -> np.ndarray:
    """``[12, L]`` index map: each layout forward then backward."""
    rows = []
    for lay in build_layouts(T, H, W, P, strategy):
        rows.append(lay.perm)
        rows.append(lay.perm[::-1])
    idx = np.stack(rows)
    idx.setflags(write=False)
    return idx


def _check_layout(f: np.ndarray, layout: ScanLayout) -> None:
    if f.ndim != 5:
        raise ShapeError("expected a [B, T, C, H, W] tensor", f.shape)
    T, _, H, W = f.shape[1:]
    if (T, H, W) != layout.dims:
        raise ShapeError("layout built for a different clip size", (T, H, W), layout.dims)


def serialize(f: np.ndarray, layout: ScanLayout) -> np.ndarray:
    """``[B, T, C, H, W] -> [B, L, C]`` in the layout's order."""
    _check_layout(f, layout)
    B, T, C, H, W = f.shape
    flat = f.transpose(0, 1, 3, 4, 2).reshape(B, T * H * W, C)
    return flat[:, layout.perm]


def deserialize(seq: np.ndarray, layout: ScanLayout) -> np.ndarray:
    """Exact inverse of :func:`serialize`."""
    if seq.ndim != 3 or seq.shape[1] != layout.length:
        raise ShapeError("sequence does not match layout length", seq.shape, (layout.length,))
    B, L, C = seq.shape
    T, H, W = layout.dims
    flat = np.empty_like(seq)
    flat[:, layout.perm] = seq
    return flat.reshape(B, T, H, W, C).transpose(0, 1, 4, 2, 3).copy()
