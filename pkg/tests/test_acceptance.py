"""Acceptance criteria AC1-AC11, one PASS/FAIL line each (see the terminal summary).

AC9-AC11 share one seeded desk-scale pipeline run through the CLI; it takes
most of an hour on one CPU.  Deselect with ``-m "not slow"``.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from uavad.autodiff import directional_check, grad_check
from uavad.cli import EXIT_OK, main
from uavad.config import ModelConfig, SynthConfig
from uavad.errors import InvalidArgument
from uavad.fdscm import st_autocorrelation, temporal_decouple
from uavad.losses import loss_total
from uavad.metrics import THRESHOLD_GRID, adaptive_threshold, auc_micro, eer, report
from uavad.model import Predictor
from uavad.scan import build_layouts, deserialize, serialize
from uavad.data import load_split
from uavad.scoring import read_scores_csv, score_clips
from uavad.spectra import avg_spectrum, axis_energy_ratio, luma
from uavad.ssm import SsmParams, kernel_convolve, scan_recurrent
from uavad.synth import motion_pair
from uavad.tdmm import phi, phi_inv
from uavad.train import load_model, loss_halved, read_loss_csv

DESK_CFG = Path(__file__).resolve().parents[1] / "configs" / "desk.cfg"


def brute_autocorr(x):
    T, S = x.shape
    return np.array([[np.sum(x * np.roll(x, (-a, -b), axis=(0, 1))) for b in range(S)]
                     for a in range(T)])


def test_ac1_wiener_khinchin(acceptance):
    rng = np.random.default_rng(1)
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(200):
        T = int(rng.integers(1, 9))
        H = int(rng.integers(1, 7))
        W = int(rng.integers(1, 36 // H + 1))
        B, C = int(rng.integers(1, 3)), int(rng.integers(1, 4))
        x = rng.normal(size=(B, T, C, H, W))
        R = st_autocorrelation(x)
        for b in range(B):
            for c in range(C):
                ref = brute_autocorr(x[b, :, c].reshape(T, H * W))
                worst = max(worst, np.max(np.abs(R[b, c] - ref)) / np.max(np.abs(ref)))
    dt = time.perf_counter() - t0
    acceptance("AC1", worst < 1e-10 and dt < 10,
               f"max rel err {worst:.2e} (< 1e-10), {dt:.2f} s (< 10 s)")


def test_ac2_ssm_duality(acceptance):
    rng = np.random.default_rng(2)
    worst, t0 = 0.0, time.perf_counter()
    for _ in range(100):
        L, N, D = int(rng.integers(1, 65)), int(rng.integers(1, 9)), int(rng.integers(1, 5))
        A = -rng.uniform(0.05, 4.0, size=(D, N))
        B, C = rng.normal(size=N), rng.normal(size=N)
        delta = rng.uniform(0.01, 1.0, size=D)
        x = rng.normal(size=(L, D))
        p = SsmParams(A, np.tile(delta, (L, 1)), np.tile(B, (L, 1)), np.tile(C, (L, 1)))
        worst = max(worst, np.max(np.abs(scan_recurrent(p, x) - kernel_convolve(A, B, C, delta, x))))
    dt = time.perf_counter() - t0
    acceptance("AC2", worst < 1e-9 and dt < 5,
               f"max abs diff {worst:.2e} (< 1e-9), {dt:.2f} s (< 5 s)")


def test_ac3_scan_bijectivity(acceptance):
    checked, bad = 0, []
    for T, H, W, P in ((6, 8, 8, 4), (2, 4, 4, 2), (1, 1, 1, 1)):
        layouts = build_layouts(T, H, W, P)
        assert len(layouts) == 6
        f = np.random.default_rng(3).normal(size=(2, T, 3, H, W))
        for lay in layouts:
            for d in (lay, lay.reversed()):
                checked += 1
                perm_ok = np.array_equal(np.sort(d.perm), np.arange(T * H * W))
                if not (perm_ok and np.array_equal(deserialize(serialize(f, d), d), f)):
                    bad.append((T, H, W, P, d.kind))
    acceptance("AC3", not bad and checked == 36,
               f"{checked - len(bad)}/{checked} layout-directions bijective with exact round trip")


def test_ac4_phi_reversibility(acceptance):
    f = np.random.default_rng(4).normal(size=(2, 6, 3, 4, 4))
    exact = all(np.array_equal(phi_inv(phi(f, eta), eta), f) for eta in (1, 2, 3))
    rejected = 0
    for eta in (4, 5):
        with pytest.raises(InvalidArgument):
            phi(f, eta)
        rejected += 1
    acceptance("AC4", exact and rejected == 2,
               f"bit-exact round trip for eta in 1,2,3 at T=6: {exact}; eta=4,5 rejected")


def test_ac5_dc_annihilation(acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        B, T, C = (int(v) for v in rng.integers(1, 9, size=3))
        H, W = (int(v) for v in rng.integers(1, 9, size=2))
        frame = rng.normal(scale=10.0, size=(B, 1, C, H, W))
        out = temporal_decouple(np.repeat(frame, T, axis=1))
        worst = max(worst, float(np.max(np.abs(out))))
    acceptance("AC5", worst < 1e-9, f"max |out| {worst:.2e} over 50 constant clips (< 1e-9)")


GRADCHECK_CFG = ModelConfig(height=32, width=32, clip_len=2, channels=(4, 8, 8, 8),
                            d_state=2, dilations=(1, 2), patch=2)


def test_ac6_full_model_gradcheck(acceptance):
    """Directional check of every parameter tensor plus sampled single entries.

    A probe of every one of the ~38k entries needs ~77k forward passes (about
    29 min here), so the default run samples; set UAVAD_EXHAUSTIVE_GRADCHECK=1
    to probe all of them.
    """
    model = Predictor(GRADCHECK_CFG)
    model.train()
    rng = np.random.default_rng(6)
    x = rng.uniform(-1, 1, size=(2, 3, 3, 32, 32))
    fn = lambda: loss_total(model(x[:, :2]), x[:, 2])
    params = model.parameters()
    total = sum(p.value.size for p in params)
    exhaustive = os.environ.get("UAVAD_EXHAUSTIVE_GRADCHECK") == "1"
    t0 = time.perf_counter()
    d_err = directional_check(fn, params, rng)
    if exhaustive:
        entries, how = None, f"all {total} entries"
    else:
        entries = {i: rng.choice(p.value.size, min(16, p.value.size), replace=False)
                   for i, p in enumerate(params)}
        how = f"{sum(len(v) for v in entries.values())} sampled entries of {total}"
    e_err = grad_check(fn, params, entries=entries)
    dt = time.perf_counter() - t0
    ok = max(d_err, e_err) < 1e-3 and (exhaustive or dt < 300)
    acceptance("AC6", ok,
               f"directional over {len(params)} tensors {d_err:.1e}, {how} {e_err:.1e} "
               f"(< 1e-3), {dt:.0f} s")


def trapezoid_auc(s, y):
    cuts = np.r_[np.inf, np.unique(s)[::-1]]
    tpr = np.array([np.mean(s[y == 1] >= c) for c in cuts])
    fpr = np.array([np.mean(s[y == 0] >= c) for c in cuts])
    return float(np.trapezoid(tpr, fpr))


def sweep_eer(s, y):
    """Sweep a threshold through every gap between distinct scores; interpolate the crossing."""
    u = np.unique(s)
    cuts = np.r_[u[0] - 1, (u[:-1] + u[1:]) / 2, u[-1] + 1]
    fpr = np.array([np.mean(s[y == 0] > c) for c in cuts])
    fnr = np.array([np.mean(s[y == 1] <= c) for c in cuts])
    d = fnr - fpr
    i = int(np.argmax(d >= 0))
    if d[i] == 0:
        return float(fpr[i])
    a = d[i - 1] / (d[i - 1] - d[i])
    return float(fpr[i - 1] + a * (fpr[i] - fpr[i - 1]))


def exhaustive_f1(s, y):
    best = (0.0, -1.0)
    for theta in THRESHOLD_GRID:
        pred = s >= theta
        tp = int(np.sum(pred & (y == 1)))
        fp, fn = int(np.sum(pred & (y == 0))), int(np.sum(~pred & (y == 1)))
        f1 = 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
        if f1 > best[1]:
            best = (float(theta), f1)
    return best


def test_ac7_metric_oracles(acceptance):
    rng = np.random.default_rng(7)
    auc_err = eer_err = 0.0
    f1_exact = True
    for i in range(100):
        n = int(rng.integers(2, 400))
        y = rng.integers(0, 2, size=n)
        y[:2] = (0, 1)
        s = rng.random(n) + rng.uniform(0, 1) * y
        if i % 3 == 0:
            s = np.round(s / 2, 1)
        auc_err = max(auc_err, abs(auc_micro(s, y) - trapezoid_auc(s, y)))
        eer_err = max(eer_err, abs(eer(s, y) - sweep_eer(s, y)))
        f1_exact &= adaptive_threshold(s, y) == exhaustive_f1(s, y)
    acceptance("AC7", auc_err < 1e-9 and eer_err < 1e-6 and f1_exact,
               f"AUC vs trapezoid {auc_err:.1e} (< 1e-9), EER vs sweep {eer_err:.1e} (< 1e-6), "
               f"F1 grid exact: {f1_exact}")


def test_ac8_spectral_structure(acceptance):
    cfg = SynthConfig(frames=30)
    t0 = time.perf_counter()
    wins, pairs = 0, []
    for i in range(10):
        g, local = motion_pair(cfg, i)
        rg, rl = (axis_energy_ratio(avg_spectrum(luma(c))) for c in (g, local))
        wins += rg > rl
        pairs.append(f"{rg:.2f}/{rl:.2f}")
    dt = time.perf_counter() - t0
    acceptance("AC8", wins >= 9 and dt < 30,
               f"global > local axis energy in {wins}/10 pairs (>= 9), {dt:.1f} s (< 30 s) "
               f"[{' '.join(pairs)}]")


# ---- seeded desk-scale pipeline (AC9-AC11) ----

def run(*argv):
    code = main([str(a) for a in argv])
    assert code == EXIT_OK, f"uavad {' '.join(map(str, argv))} exited {code}"


def micro_auc(csv_path):
    return report(read_scores_csv(csv_path))["micro_auc"]


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    run("synth", "--config", DESK_CFG, "--out", root / "data")
    run("train", "--config", DESK_CFG, "--data", root / "data", "--out", root / "full")
    run("score", "--checkpoint", root / "full/model.ftdm", "--data", root / "data",
        "--out", root / "full/scores.csv")
    run("eval", root / "full/scores.csv", "--out", root / "full/eval")
    return root, time.perf_counter() - t0


@pytest.mark.slow
def test_ac9_desk_end_to_end(desk, acceptance):
    root, dt = desk
    halved, first, last = loss_halved(read_loss_csv(root / "full/loss.csv")[:, 5])
    auc = micro_auc(root / "full/scores.csv")
    # the literal prediction-peak PSNR is reported alongside, not gated
    model, cfg, _ = load_model(root / "full/model.ftdm")
    clips = load_split(root / "data", "test", (cfg.model.height, cfg.model.width))
    literal = report(score_clips(model, clips, cfg.eval.score_batch))["micro_auc"]
    acceptance("AC9", dt < 1800 and halved and auc >= 0.70,
               f"{dt / 60:.1f} min (< 30), loss {first:.3f} -> {last:.3f} halved: {halved}, "
               f"Micro-AUC {auc:.3f} (>= 0.70, fixed-peak PSNR per configs/desk.cfg; "
               f"literal max(Y_hat) peak: {literal:.3f})")


@pytest.mark.slow
def test_ac10_ablation_direction(desk, acceptance):
    root, _ = desk
    full = micro_auc(root / "full/scores.csv")
    variants = {}
    for name, flag in (("no-FDSCM", ["--no-fdscm"]), ("no-TDMM", ["--no-tdmm"]),
                       ("cascaded", ["--topology", "cascaded"])):
        out = root / name
        run("train", "--config", DESK_CFG, *flag, "--data", root / "data", "--out", out)
        run("score", "--checkpoint", out / "model.ftdm", "--data", root / "data",
            "--out", out / "scores.csv", "--no-plots")
        variants[name] = micro_auc(out / "scores.csv")
    within = all(full >= v - 0.02 for v in variants.values())
    below_all = all(full < v for v in variants.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in variants.items())
    acceptance("AC10", not below_all,
               f"full {full:.3f} vs {detail}; within 0.02 of each: {within}; "
               f"below all three: {below_all}")


@pytest.mark.slow
def test_ac11_robustness_trend(desk, acceptance):
    root, _ = desk
    ckpt = root / "full/model.ftdm"
    curves = {}
    for kind, levels in (("gaussian", (0, 50, 150, 250)), ("occlude", (0, 0.2, 0.4))):
        aucs = []
        for level in levels:
            data = root / f"{kind}_{level}"
            run("perturb", "--data", root / "data", "--kind", kind, "--level", level,
                "--out", data)
            run("score", "--checkpoint", ckpt, "--data", data, "--out", data / "scores.csv",
                "--no-plots")
            aucs.append(micro_auc(data / "scores.csv"))
        curves[kind] = aucs
    ok = all(b <= a + 0.03 for aucs in curves.values() for a, b in zip(aucs, aucs[1:]))
    acceptance("AC11", ok, "; ".join(f"{k} " + " ".join(f"{a:.3f}" for a in v)
                                     for k, v in curves.items()) + " (non-increasing within 0.03)")
