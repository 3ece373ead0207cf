"""Frame ingestion: binary PNM (P5/P6) with an optional PNG path, bilinear
resize, and the dataset directory layout.

Layout::

    root/manifest.txt            # "<split> <clip dir> <frame count>" per line
    root/<split>/<clip>/000000.ppm ...
    root/<split>/<clip>/labels.txt   # one 0/1 per frame
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgument

FRAME_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png")
MANIFEST = "manifest.txt"
LABELS = "labels.txt"

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pnm(path: str | Path) -> np.ndarray:
    """Binary P5 -> ``[H, W]`` uint8, P6 -> ``[H, W, 3]`` uint8."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    pos, fields = 0, []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DataError(f"{path}: truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported image format {magic[:2]!r}")
    try:
        w, h, maxval = (int(x) for x in fields[1:])
    except ValueError:
        raise DataError(f"{path}: malformed PNM header") from None
    if not 0 < maxval < 256:
        raise DataError(f"{path}: only 8-bit PNM is supported (maxval {maxval})")
    pos += 1  # single whitespace byte before the raster
    ch = 3 if magic == b"P6" else 1
    n = w * h * ch
    raster = np.frombuffer(data, np.uint8, count=min(n, max(len(data) - pos, 0)), offset=pos)
    if raster.size != n:
        raise DataError(f"{path}: raster holds {raster.size} bytes, expected {n}")
    img = raster.reshape((h, w, 3) if ch == 3 else (h, w))
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img.copy()


def write_pnm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise InvalidArgument(f"PNM writer expects uint8, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise InvalidArgument(f"cannot write image of shape {img.shape} as PNM")
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Any supported frame file as ``[H, W, 3]`` uint8 (gray is replicated)."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        try:
            from PIL import Image
        except ImportError:
            raise DataError(f"{path}: PNG input needs Pillow (pip install uavad[png])") from None
        try:
            with Image.open(path) as im:
                img = np.asarray(im.convert("RGB"))
        except OSError as e:
            raise DataError(f"cannot decode {path}: {e}") from None
    else:
        img = read_pnm(path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


def _bilinear_taps(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5, clamped to the edge
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize ``[H, W, ...]`` to ``[height, width, ...]`` (float64)."""
    if height < 1 or width < 1:
        raise InvalidArgument(f"target size must be positive, got {height}x{width}")
    x = np.asarray(img, dtype=np.float64)
    H, W = x.shape[:2]
    if (H, W) == (height, width):
        return x.copy()
    lo, hi, f = _bilinear_taps(H, height)
    f = f.reshape((-1,) + (1,) * (x.ndim - 1))
    x = x[lo] * (1 - f) + x[hi] * f
    lo, hi, f = _bilinear_taps(W, width)
    f = f.reshape((1, -1) + (1,) * (x.ndim - 2))
    return x[:, lo] * (1 - f) + x[:, hi] * f


def to_unit(img) -> np.ndarray:
    """8-bit values to ``[-1, 1]`` via ``x / 127.5 - 1``."""
    return np.asarray(img, dtype=np.float64) / 127.5 - 1.0


def from_unit(x) -> np.ndarray:
    return np.clip(np.round((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def frame_files(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def load_clip(directory: str | Path, size: tuple[int, int] | None = None) -> np.ndarray:
    """Frames of one clip in name order as ``[T, 3, H, W]`` in ``[-1, 1]``."""
    files = frame_files(directory)
    if not files:
        raise InvalidArgument(f"no frame images in {directory}")
    frames = []
    for f in files:
        img = read_image(f).astype(np.float64)
        if size is not None:
            img = resize_bilinear(img, *size)
        frames.append(to_unit(img).transpose(2, 0, 1))
    shapes = {fr.shape for fr in frames}
    if len(shapes) != 1:
        raise DataError(f"{directory}: frames differ in size {sorted(shapes)}")
    return np.stack(frames)


def read_labels(directory: str | Path) -> np.ndarray:
    path = Path(directory) / LABELS
    try:
        lines = path.read_text(encoding="utf-8").split()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    labels = []
    for i, tok in enumerate(lines, 1):
        if tok not in ("0", "1"):
            raise DataError(f"{path}:{i}: label must be 0 or 1, got {tok!r}")
        labels.append(int(tok))
    return np.array(labels, dtype=np.int64)


def write_labels(directory: str | Path, labels) -> None:
    Path(directory, LABELS).write_text("".join(f"{int(x)}\n" for x in labels), encoding="utf-8")


@dataclass(frozen=True)
class ClipEntry:
    split: str
    name: str
    frames: int


@dataclass
class Clip:
    name: str
    frames: np.ndarray   # [T, 3, H, W]
    labels: np.ndarray   # [T]


def read_manifest(root: str | Path) -> list[ClipEntry]:
    path = Path(root) / MANIFEST
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    entries = []
    for i, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or not parts[2].isdigit():
            raise DataError(f"{path}:{i}: expected '<split> <clip> <frames>'")
        entries.append(ClipEntry(parts[0], parts[1], int(parts[2])))
    return entries


def write_manifest(root: str | Path, entries: list[ClipEntry]) -> None:
    lines = ["# split clip frames"] + [f"{e.split} {e.name} {e.frames}" for e in entries]
    Path(root, MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_split(root: str | Path, split: str, size: tuple[int, int] | None = None) -> list[Clip]:
    root = Path(root)
    clips = []
    for e in read_manifest(root):
        if e.split != split:
            continue
        d = root / e.name
        frames = load_clip(d, size)
        labels = read_labels(d)
        if len(labels) != len(frames):
            raise DataError(f"{d}: {len(labels)} labels for {len(frames)} frames")
        clips.append(Clip(e.name, frames, labels))
    return clips
