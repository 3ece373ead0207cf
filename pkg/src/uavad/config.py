"""Run configuration: frozen dataclasses with a flat ``section.key = value`` text form.

Example::

    # desk run
    model.channels = 16,32,64,128
    model.topology = parallel
    train.steps = 200
    train.loss_weights = 1,1,1

Unknown keys and malformed values are errors.  ``dump`` writes every field,
so a dumped file reproduces the run exactly.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import InvalidArgument


@dataclass(frozen=True)
class ModelConfig:
    height: int = 64
    width: int = 64
    clip_len: int = 6
    channels: tuple[int, ...] = (16, 32, 64, 128)
    # frequency branch toggles: temporal decoupling, correlation attention
    tfd: bool = True
    stc: bool = True
    raw_correlation: bool = False
    # mamba branch toggles: STMamba blocks, multi-rate dilation
    stm: bool = True
    mst: bool = True
    dilations: tuple[int, ...] = (1, 2, 3)
    depth: int = 1
    patch: int = 4
    scan_strategy: str = "pixel,patch"
    d_state: int = 8
    expand: int = 2
    conv_silu: bool = True
    share_dilation_weights: bool = False
    dilation_split: str = "stride"
    topology: str = "parallel"
    seed: int = 0

    def __post_init__(self):
        if self.height % 32 or self.width % 32 or self.height < 32 or self.width < 32:
            raise InvalidArgument(
                f"input size {self.height}x{self.width} must be a positive multiple of 32")
        if self.clip_len < 2:
            raise InvalidArgument(f"clip_len must be >= 2, got {self.clip_len}")
        if len(self.channels) != 4 or min(self.channels) < 1:
            raise InvalidArgument(f"channels must list four positive widths, got {self.channels}")
        if self.topology not in ("parallel", "cascaded"):
            raise InvalidArgument(f"topology must be parallel or cascaded, got {self.topology!r}")
        for eta in self.active_rates:
            if eta < 1 or self.clip_len % eta:
                raise InvalidArgument(
                    f"dilation rate {eta} does not divide clip length {self.clip_len}")

    @property
    def active_rates(self) -> tuple[int, ...]:
        return tuple(self.dilations) if self.mst else (1,)

    @property
    def fdscm_on(self) -> bool:
        return self.tfd or self.stc


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    batch_size: int = 2
    lr: float = 5e-5
    lr_min: float = 0.0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    ssim_multiscale: bool = False
    seed: int = 0


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    train_clips: int = 4
    test_clips: int = 4
    frames: int = 40
    sprites: int = 3
    sprite_size: int = 8
    sprite_speed: float = 1.0
    global_speed: float = 1.0
    texture_cell: int = 8
    anomaly_fraction: float = 0.35
    anomaly_kinds: tuple[str, ...] = ("speed", "new_object", "reverse", "vanish")
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    psnr_fixed_range: bool = False
    score_batch: int = 8


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def with_overrides(self, **sections) -> "RunConfig":
        """``cfg.with_overrides(model={"topology": "cascaded"})``."""
        new = {}
        for name, changes in sections.items():
            try:
                new[name] = replace(getattr(self, name), **changes)
            except TypeError as e:
                raise InvalidArgument(str(e)) from None
        return replace(self, **new)


def _parse_value(raw: str, typ, key: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        origin = typing.get_origin(typ)
        if origin is tuple:
            (inner, _ellipsis) = typing.get_args(typ)
            parts = [p for p in (s.strip() for s in raw.split(",")) if p]
            return tuple(_parse_value(p, inner, key) for p in parts)
    except ValueError:
        raise InvalidArgument(f"bad value {raw!r} for {key}") from None
    raise InvalidArgument(f"unsupported field type for {key}")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    sections = {f.name: {} for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in sections:
            raise InvalidArgument(f"line {lineno}: unknown key {key!r}")
        cls = type(getattr(base, section))
        hints = typing.get_type_hints(cls)
        if name not in hints:
            raise InvalidArgument(f"line {lineno}: unknown key {key!r}")
        sections[section][name] = _parse_value(raw, hints[name], key)
    return base.with_overrides(**{k: v for k, v in sections.items() if v})


def load(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse(Path(path).read_text(encoding="utf-8"), base)


def dump(cfg: RunConfig) -> str:
    lines = []
    for sec in fields(cfg):
        sub = getattr(cfg, sec.name)
        for f in fields(sub):
            lines.append(f"{sec.name}.{f.name} = {_format_value(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"

