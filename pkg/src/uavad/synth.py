"""Seeded synthetic moving-camera clips.

Each clip is a periodic "aerial" background (random-level blocks crossed by a
few roads) scrolled by a global camera velocity with wraparound, plus
hard-edged disc sprites moving with their own velocities.  Test clips carry
one anomaly window:

- ``speed``: one sprite moves four times faster
- ``reverse``: one sprite flips direction every other frame
- ``new_object``: an unseen, larger white disc crosses the frame quickly
- ``vanish``: one sprite blinks out on alternate frames

Frames inside the window are labelled 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SynthConfig
from .data import Clip, ClipEntry, write_labels, write_manifest, write_pnm
from .errors import InvalidArgument

ANOMALY_KINDS = ("speed", "reverse", "new_object", "vanish")


@dataclass(frozen=True)
class Sprite:
    x: float
    y: float
    vx: float
    vy: float
    radius: float
    color: tuple[int, int, int]


@dataclass(frozen=True)
class Anomaly:
    kind: str
    start: int
    end: int      # exclusive
    sprite: int = 0


@dataclass(frozen=True)
class SynthSpec:
    height: int
    width: int
    frames: int
    global_velocity: tuple[float, float] = (0.0, 0.0)   # (vx, vy) pixels/frame
    sprites: tuple[Sprite, ...] = ()
    anomaly: Anomaly | None = None
    texture_cell: int = 8
    roads: int = 3
    texture_seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.frames < 1:
            raise InvalidArgument("frame size and clip length must be positive")
        if self.texture_cell < 1:
            raise InvalidArgument(f"texture_cell must be positive, got {self.texture_cell}")
        vx, vy = self.global_velocity
        if abs(vx) >= self.width or abs(vy) >= self.height:
            raise InvalidArgument("global velocity must stay below the frame size per step")
        for s in self.sprites:
            if abs(s.vx) >= self.width or abs(s.vy) >= self.height or s.radius <= 0:
                raise InvalidArgument(f"invalid sprite {s}")
        a = self.anomaly
        if a is not None:
            if a.kind not in ANOMALY_KINDS:
                raise InvalidArgument(f"unknown anomaly kind {a.kind!r}")
            if not 0 <= a.start < a.end <= self.frames:
                raise InvalidArgument(f"anomaly window [{a.start}, {a.end}) outside clip "
                                      f"of {self.frames} frames")
            if a.kind != "new_object" and not 0 <= a.sprite < len(self.sprites):
                raise InvalidArgument(f"anomaly targets missing sprite {a.sprite}")


@dataclass
class LabeledDataset:
    train: list[Clip] = field(default_factory=list)
    test: list[Clip] = field(default_factory=list)

    def splits(self):
        return (("train", self.train), ("test", self.test))


def make_texture(height: int, width: int, cell: int, roads: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Periodic ``[H, W, 3]`` float background in 0..255."""
    gh, gw = -(-height // cell), -(-width // cell)
    levels = rng.uniform(70, 170, size=(gh, gw, 1)) + rng.uniform(-12, 12, size=(gh, gw, 3))
    tex = np.repeat(np.repeat(levels, cell, axis=0), cell, axis=1)[:height, :width].copy()
    for _ in range(roads):
        pos = int(rng.integers(0, height if rng.random() < 0.5 else width))
        width_px = int(rng.integers(2, 4))
        shade = rng.uniform(25, 50)
        if rng.random() < 0.5:
            tex[np.arange(pos, pos + width_px) % height, :, :] = shade
        else:
            tex[:, np.arange(pos, pos + width_px) % width, :] = shade
    return tex


def _sprite_positions(spec: SynthSpec, i: int) -> np.ndarray:
    s, a = spec.sprites[i], spec.anomaly
    vel = np.empty((spec.frames, 2))
    vel[:] = (s.vx, s.vy)
    if a is not None and a.sprite == i and a.kind in ("speed", "reverse"):
        for t in range(a.start, a.end):
            if a.kind == "speed":
                vel[t] *= 4.0
            elif (t - a.start) % 2 == 0:
                vel[t] *= -1.0
    # position at frame t is the start plus the velocities of steps 1..t
    steps = np.vstack([np.zeros((1, 2)), np.cumsum(vel[1:], axis=0)])
    return np.array([s.x, s.y]) + steps


def _draw_disc(frame: np.ndarray, cx: float, cy: float, radius: float, color) -> None:
    H, W = frame.shape[:2]
    cx, cy = int(round(cx)) % W, int(round(cy)) % H
    dx = (np.arange(W) - cx + W // 2) % W - W // 2
    dy = (np.arange(H) - cy + H // 2) % H - H // 2
    mask = dy[:, None] ** 2 + dx[None, :] ** 2 <= radius ** 2
    frame[mask] = color


def render(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Frames ``[T, H, W, 3]`` uint8 and labels ``[T]``."""
    rng = np.random.default_rng(spec.texture_seed)
    tex = make_texture(spec.height, spec.width, spec.texture_cell, spec.roads, rng)
    paths = [_sprite_positions(spec, i) for i in range(len(spec.sprites))]
    a = spec.anomaly
    labels = np.zeros(spec.frames, dtype=np.int64)
    if a is not None:
        labels[a.start:a.end] = 1
        if a.kind == "new_object":
            ang = rng.uniform(0, 2 * np.pi)
            speed = 3.0 * max(1.0, max((np.hypot(s.vx, s.vy) for s in spec.sprites), default=1.0))
            intruder = (rng.uniform(0, spec.width), rng.uniform(0, spec.height),
                        speed * np.cos(ang), speed * np.sin(ang))
            big = 1.5 * max((s.radius for s in spec.sprites), default=4.0)
    frames = np.empty((spec.frames, spec.height, spec.width, 3), dtype=np.uint8)
    vx, vy = spec.global_velocity
    for t in range(spec.frames):
        shift = (int(round(vy * t)), int(round(vx * t)))
        frame = np.roll(tex, shift, axis=(0, 1))
        for i, s in enumerate(spec.sprites):
            if (a is not None and a.kind == "vanish" and a.sprite == i
                    and a.start <= t < a.end and (t - a.start) % 2 == 0):
                continue
            _draw_disc(frame, *paths[i][t], s.radius, s.color)
        if a is not None and a.kind == "new_object" and a.start <= t < a.end:
            k = t - a.start
            _draw_disc(frame, intruder[0] + k * intruder[2], intruder[1] + k * intruder[3],
                       big, (255, 255, 255))
        frames[t] = np.clip(np.round(frame), 0, 255).astype(np.uint8)
    return frames, labels


# compass directions keep per-frame displacements whole pixels, so steady motion
# looks the same from frame to frame
_COMPASS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def _random_velocity(rng: np.random.Generator, speed: float) -> tuple[float, float]:
    dx, dy = _COMPASS[int(rng.integers(len(_COMPASS)))]
    return float(speed * dx), float(speed * dy)


def random_sprites(rng: np.random.Generator, cfg: SynthConfig, count: int) -> tuple[Sprite, ...]:
    out = []
    for _ in range(count):
        hue = rng.integers(0, 3)
        color = [int(c) for c in rng.integers(0, 90, size=3)]
        color[hue] = int(rng.integers(200, 256))
        out.append(Sprite(float(rng.uniform(0, cfg.width)), float(rng.uniform(0, cfg.height)),
                          *_random_velocity(rng, cfg.sprite_speed),
                          radius=cfg.sprite_size / 2.0, color=tuple(color)))
    return tuple(out)


def clip_spec(cfg: SynthConfig, split: str, index: int, *, global_motion: bool = True,
              sprites: int | None = None, anomaly: str | None = None) -> SynthSpec:
    """Deterministic per-clip spec; the RNG stream depends only on (seed, split, index)."""
    rng = np.random.default_rng([cfg.seed, {"train": 0, "test": 1}.get(split, 2), index])
    gvel = _random_velocity(rng, cfg.global_speed) if global_motion else (0.0, 0.0)
    n = cfg.sprites if sprites is None else sprites
    sprs = random_sprites(rng, cfg, n)
    an = None
    if anomaly is not None:
        length = max(1, int(round(cfg.anomaly_fraction * cfg.frames)))
        lo = max(1, cfg.frames // 4)
        hi = max(lo, cfg.frames - length)
        start = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        start = min(start, max(0, cfg.frames - length))
        target = int(rng.integers(0, n)) if n else 0
        if anomaly != "new_object" and n == 0:
            raise InvalidArgument(f"anomaly {anomaly!r} needs at least one sprite")
        an = Anomaly(anomaly, start, min(cfg.frames, start + length), target)
    return SynthSpec(cfg.height, cfg.width, cfg.frames, gvel, sprs, an,
                     texture_cell=cfg.texture_cell, texture_seed=int(rng.integers(2 ** 31)))


def gen_synthetic(cfg: SynthConfig) -> LabeledDataset:
    for kind in cfg.anomaly_kinds:
        if kind not in ANOMALY_KINDS:
            raise InvalidArgument(f"unknown anomaly kind {kind!r}")
    if cfg.test_clips and not cfg.anomaly_kinds:
        raise InvalidArgument("test clips need at least one anomaly kind")
    if not 0 < cfg.anomaly_fraction < 1:
        raise InvalidArgument(f"anomaly_fraction must lie in (0, 1), got {cfg.anomaly_fraction}")
    ds = LabeledDataset()
    for i in range(cfg.train_clips):
        frames, labels = render(clip_spec(cfg, "train", i))
        ds.train.append(Clip(f"train/clip_{i:03d}", frames, labels))
    for i in range(cfg.test_clips):
        kind = cfg.anomaly_kinds[i % len(cfg.anomaly_kinds)]
        frames, labels = render(clip_spec(cfg, "test", i, anomaly=kind))
        ds.test.append(Clip(f"test/clip_{i:03d}", frames, labels))
    return ds


def motion_pair(cfg: SynthConfig, index: int) -> tuple[np.ndarray, np.ndarray]:
    """(global-motion-only clip, local-motion-only clip) sharing one background."""
    g = clip_spec(cfg, "pair", index, sprites=0)
    local = clip_spec(cfg, "pair", index, global_motion=False)
    local = SynthSpec(local.height, local.width, local.frames, (0.0, 0.0), local.sprites,
                      texture_cell=local.texture_cell, texture_seed=g.texture_seed)
    return render(g)[0], render(local)[0]


def write_dataset(ds: LabeledDataset, root: str | Path) -> list[ClipEntry]:
    root = Path(root)
    entries = []
    for split, clips in ds.splits():
        for clip in clips:
            d = root / clip.name
            d.mkdir(parents=True, exist_ok=True)
            for t, frame in enumerate(clip.frames):
                write_pnm(d / f"{t:06d}.ppm", frame)
            write_labels(d, clip.labels)
            entries.append(ClipEntry(split, clip.name, len(clip.frames)))
    write_manifest(root, entries)
    return entries
