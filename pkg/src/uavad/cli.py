"""``uavad`` command line: synth, train, score, eval, perturb, spectra.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric error (undefined metric, non-finite loss), 1 anything else.
"""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import RunConfig
from .errors import DataError, InvalidArgument, ShapeError, UndefinedMetric

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
CONFIG_SNAPSHOT = "config.txt"


class UsageError(Exception):
    pass


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def load_config(args) -> RunConfig:
    """Config file, then ``--seed`` and the ablation flags; validated and frozen."""
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else RunConfig()
    model, train, synth = {}, {}, {}
    if getattr(args, "seed", None) is not None:
        model["seed"] = train["seed"] = synth["seed"] = args.seed
    if getattr(args, "topology", None):
        model["topology"] = args.topology
    if getattr(args, "no_fdscm", False):
        model["tfd"] = model["stc"] = False
    if getattr(args, "no_tdmm", False):
        model["stm"] = False
    if getattr(args, "scan_strategy", None):
        model["scan_strategy"] = args.scan_strategy
    if getattr(args, "depth", None) is not None:
        model["depth"] = args.depth
    if getattr(args, "dilations", None):
        model["dilations"] = _ints(args.dilations)
    if getattr(args, "loss_weights", None):
        train["loss_weights"] = _floats(args.loss_weights)
    if getattr(args, "steps", None) is not None:
        train["steps"] = args.steps
    sections = {k: v for k, v in (("model", model), ("train", train), ("synth", synth)) if v}
    return cfg.with_overrides(**sections) if sections else cfg


def write_snapshot(directory: Path, cfg: RunConfig, name: str = CONFIG_SNAPSHOT) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / name).write_text(config_mod.dump(cfg), encoding="utf-8")


def prepare_out_dir(out: Path, force: bool) -> None:
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()):
        if not force:
            raise UsageError(f"{out} is not empty (use --force to replace it)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    from .synth import gen_synthetic, write_dataset

    cfg = load_config(args)
    out = Path(args.out)
    prepare_out_dir(out, args.force)
    entries = write_dataset(gen_synthetic(cfg.synth), out)
    write_snapshot(out, cfg)
    print(f"wrote {len(entries)} clips to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .data import load_split
    from .train import read_loss_csv, train

    cfg = load_config(args)
    clips = load_split(args.data, "train", (cfg.model.height, cfg.model.width))
    out = Path(args.out)
    if args.resume is None:
        prepare_out_dir(out, args.force)
    write_snapshot(out, cfg)

    def progress(step, loss):
        if step % args.log_every == 0 or step == cfg.train.steps - 1:
            _note(f"step {step:5d}  loss {loss:.5f}")

    train(clips, cfg, out_dir=out, resume=args.resume, progress=progress)
    if not args.no_plots:
        from .plotting import plot_loss
        plot_loss(read_loss_csv(out / "loss.csv"), out / "loss.png")
    print(f"checkpoint {out / 'model.ftdm'}")
    return EXIT_OK


def cmd_score(args) -> int:
    import warnings

    from .data import load_split
    from .scoring import score_clips, write_scores_csv
    from .train import load_model

    model, cfg, _ = load_model(args.checkpoint)
    clips = load_split(args.data, args.split, (cfg.model.height, cfg.model.width))
    if args.fixed_range or cfg.eval.psnr_fixed_range:
        fixed = 2.0
    else:
        fixed = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        series = score_clips(model, clips, cfg.eval.score_batch, fixed)
    for w in caught:
        _note(f"warning: {w.message}")
    _note(f"note: the first {cfg.model.clip_len} frames of each video have no prediction "
          f"and are omitted")
    for vid in series.degenerate:
        _note(f"warning: {vid}: constant PSNR, normal score set to 0.5")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores_csv(out, series)
    write_snapshot(out.parent, cfg, out.name + ".config.txt")
    if not args.no_plots and len(series):
        from .plotting import plot_scores
        plot_scores(series, out.with_suffix(".png"))
    print(f"scored {len(series)} frames from {len(series.videos())} videos -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import eer, format_report, report, roc
    from .scoring import read_scores_csv

    series = read_scores_csv(args.scores)
    rep = report(series)
    text = format_report(rep)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.txt").write_text(text, encoding="utf-8")
        write_snapshot(out, load_config(args))
        if not args.no_plots:
            from .plotting import plot_roc, plot_scores
            plot_roc(roc(series.anomaly, series.label), out / "roc.png",
                     eer(series.anomaly, series.label))
            plot_scores(series, out / "scores.png")
    return EXIT_OK


def cmd_perturb(args) -> int:
    from .data import (from_unit, load_clip, read_labels, read_manifest,
                       write_labels, write_manifest, write_pnm)
    from .perturb import perturb_gaussian, perturb_occlude

    if args.kind == "gaussian":
        if args.level < 0:
            raise UsageError(f"gaussian sigma must be >= 0, got {args.level}")
    elif not 0 <= args.level <= 1:
        raise UsageError(f"occlusion ratio must lie in [0, 1], got {args.level}")
    cfg = load_config(args)
    src, out = Path(args.data), Path(args.out)
    entries = read_manifest(src)
    prepare_out_dir(out, args.force)
    for i, e in enumerate(entries):
        frames = load_clip(src / e.name)           # [T, 3, H, W] in [-1, 1]
        if e.split in args.splits:
            seed = [args.seed if args.seed is not None else 0, i]
            if args.kind == "gaussian":
                frames = perturb_gaussian(frames, args.level, np.random.default_rng(seed))
            else:
                frames = perturb_occlude(frames, args.level, np.random.default_rng(seed))
        d = out / e.name
        d.mkdir(parents=True, exist_ok=True)
        for t, fr in enumerate(frames):
            write_pnm(d / f"{t:06d}.ppm", from_unit(fr.transpose(1, 2, 0)))
        write_labels(d, read_labels(src / e.name))
    write_manifest(out, entries)
    write_snapshot(out, cfg)
    print(f"{args.kind} level {args.level} applied to {','.join(args.splits)} -> {out}")
    return EXIT_OK


def cmd_spectra(args) -> int:
    from .data import load_clip, read_manifest, write_pnm
    from .spectra import avg_spectrum, axis_energy_ratio

    cfg = load_config(args)
    src, out = Path(args.data), Path(args.out)
    entries = [e for e in read_manifest(src) if args.clip in (None, e.name)]
    if not entries:
        raise DataError(f"no clip named {args.clip!r} in {src}")
    out.mkdir(parents=True, exist_ok=True)
    for e in entries:
        frames = (load_clip(src / e.name) + 1.0) * 127.5
        spec = avg_spectrum(frames.mean(axis=1)[: args.frames or None])
        try:
            ratio = axis_energy_ratio(spec)
        except UndefinedMetric as err:
            _note(f"warning: {e.name}: {err}; ratio recorded as nan")
            ratio = float("nan")
        shown = np.log1p(spec) if args.log else spec
        gray = np.round(255.0 * shown / max(shown.max(), 1e-300)).astype(np.uint8)
        target = out / e.name
        target.parent.mkdir(parents=True, exist_ok=True)
        write_pnm(target.with_suffix(".pgm"), gray)
        target.with_suffix(".txt").write_text(f"axis_energy_ratio = {ratio!r}\n", encoding="utf-8")
        if not args.no_plots:
            from .plotting import plot_spectrum
            plot_spectrum(spec, target.with_suffix(".png"), f"{e.name}  axis ratio {ratio:.3f}")
        print(f"{e.name} axis_energy_ratio {ratio:.6f}")
    write_snapshot(out, cfg)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _common(p, seed=True):
    p.add_argument("--config", help="flat key = value run configuration")
    if seed:
        p.add_argument("--seed", type=int, help="override every seed in the configuration")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def _ablation(p):
    p.add_argument("--topology", choices=("parallel", "cascaded"))
    p.add_argument("--no-fdscm", action="store_true", help="replace the frequency branch by identity")
    p.add_argument("--no-tdmm", action="store_true", help="replace the Mamba branch by identity")
    p.add_argument("--scan-strategy", help="e.g. pixel,patch (temporal-first, spatial-first)")
    p.add_argument("--depth", type=int, help="STMamba blocks per stack")
    p.add_argument("--dilations", help="comma-separated dilation rates, e.g. 1,2,3")
    p.add_argument("--loss-weights", help="alpha,beta,gamma")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavad", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on the normal-only train split")
    _common(p)
    _ablation(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--steps", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="per-frame scores for a split")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="score CSV path")
    p.add_argument("--split", default="test")
    p.add_argument("--fixed-range", action="store_true", help="PSNR with a fixed peak of 2")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="metrics from a score CSV")
    _common(p, seed=False)
    p.add_argument("scores")
    p.add_argument("--out", help="directory for metrics.txt and figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="noisy or occluded copy of a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--kind", required=True, choices=("gaussian", "occlude"))
    p.add_argument("--level", required=True, type=float, help="sigma (0-255 scale) or ratio")
    p.add_argument("--splits", default="test", type=lambda s: tuple(s.split(",")))
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("spectra", help="average magnitude spectra per clip")
    _common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip", help="only this clip (manifest name)")
    p.add_argument("--frames", type=int, default=30, help="frames averaged (0 = all)")
    p.add_argument("--log", action="store_true", help="log-magnitude graymap")
    p.set_defaults(func=cmd_spectra)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (UsageError, InvalidArgument) as e:
        _note(f"uavad {args.command}: {e}")
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as e:
        _note(f"uavad {args.command}: data error: {e}")
        return EXIT_DATA
    except (UndefinedMetric, FloatingPointError) as e:
        _note(f"uavad {args.command}: numeric error: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
