import numpy as np
import pytest

from uavad.config import ModelConfig
from uavad.data import Clip
from uavad.errors import DataError, InvalidArgument, ShapeError
from uavad.model import Predictor
from uavad.scoring import (normalize_scores, normalize_video, psnr, read_scores_csv,
                           score_clips, write_scores_csv)


def test_psnr_examples(rng):
    y = rng.uniform(-1, 1, size=(3, 8, 8))
    assert psnr(y, y) == 100.0
    pred = np.zeros((10, 10))
    pred[0, 0] = 1.0
    target = pred.copy()
    target.ravel()[1:] += np.where(np.arange(99) % 2, 0.1, -0.1)  # MSE 0.99 * 0.01
    assert psnr(target, pred) == pytest.approx(10 * np.log10(1 / 0.0099), rel=1e-12)
    pred = np.array([1.0, 0.0])
    assert psnr(np.array([0.9, 0.1]), pred) == pytest.approx(20.0, rel=1e-12)
    assert psnr(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert psnr(np.array([0.5, 0.5]), np.zeros(2)) == pytest.approx(10 * np.log10(1e-12 / 0.25))
    assert psnr(np.array([0.9, 0.1]), pred, fixed_range=2.0) == pytest.approx(20 + 10 * np.log10(4))
    with pytest.raises(ShapeError):
        psnr(np.zeros(2), np.zeros(3))


def test_psnr_monotone(rng):
    pred = rng.uniform(-1, 1, size=(16, 16))
    noise = rng.normal(size=pred.shape)
    vals = [psnr(pred + a * noise, pred) for a in (0.01, 0.02, 0.05, 0.1, 0.5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_normalize():
    assert np.allclose(normalize_video([10, 20, 30])[0], [0, 0.5, 1])
    norm, flat = normalize_video([7, 7, 7])
    assert flat and np.all(norm == 0.5)
    with pytest.raises(InvalidArgument):
        normalize_video([])
    s = normalize_scores([("a", [6, 7, 8], [10, 20, 30], [0, 0, 1]),
                          ("b", [6, 7], [100, 50], [1, 0]),
                          ("c", [6], [3], [0])])
    assert np.allclose(s.normal, [0, 0.5, 1, 1, 0, 0.5])
    assert np.allclose(s.anomaly, 1 - s.normal)
    assert s.degenerate == ["c"] and s.videos() == ["a", "b", "c"]


def test_normalize_affine_invariance(rng):
    p = rng.normal(30, 5, size=20)
    a = normalize_video(p)[0]
    assert np.allclose(normalize_video(3.5 * p - 7)[0], a, rtol=0, atol=1e-14)


def test_csv_round_trip(tmp_path):
    s = normalize_scores([("train/x", [6, 7, 8], [10.5, 20.25, 30.0], [0, 0, 1])])
    write_scores_csv(tmp_path / "s.csv", s)
    r = read_scores_csv(tmp_path / "s.csv")
    assert r.video_id == s.video_id
    for f in ("frame_index", "psnr", "normal", "anomaly", "label"):
        assert np.array_equal(getattr(r, f), getattr(s, f))
    text = (tmp_path / "s.csv").read_text()
    assert text.splitlines()[0] == "video_id,frame_index,psnr_db,normal_score,anomaly_score,label"


@pytest.mark.parametrize("bad_row", ["v,1,2.0,0.5,0.5", "v,x,2.0,0.5,0.5,0", "v,1,2.0,0.5,0.5,3",
                                     "v,1,2.0,1.5,-0.5,0", "v,1,nan,0.5,0.5,0"])
def test_csv_malformed_line_number(tmp_path, bad_row):
    p = tmp_path / "s.csv"
    p.write_text("video_id,frame_index,psnr_db,normal_score,anomaly_score,label\n"
                 "v,0,1.0,0.0,1.0,0\n" + bad_row + "\n")
    with pytest.raises(DataError, match=r":3:"):
        read_scores_csv(p)


def test_csv_missing_and_header(tmp_path):
    with pytest.raises(DataError):
        read_scores_csv(tmp_path / "nope.csv")
    (tmp_path / "h.csv").write_text("a,b\n")
    with pytest.raises(DataError, match=":1:"):
        read_scores_csv(tmp_path / "h.csv")


def test_score_clips(rng):
    cfg = ModelConfig(height=32, width=32, clip_len=2, channels=(4, 8, 8, 8), d_state=2,
                      dilations=(1, 2), patch=2)
    model = Predictor(cfg)
    clips = [Clip("a", rng.uniform(-1, 1, size=(5, 3, 32, 32)), np.array([0, 0, 0, 1, 0])),
             Clip("short", rng.uniform(-1, 1, size=(2, 3, 32, 32)), np.zeros(2, int))]
    with pytest.warns(UserWarning, match="short"):
        s = score_clips(model, clips, batch=2)
    assert s.video_id == ["a"] * 3
    assert s.frame_index.tolist() == [2, 3, 4] and s.label.tolist() == [0, 1, 0]
    assert np.all((s.normal >= 0) & (s.normal <= 1))
    s2 = score_clips(model, clips[:1], batch=8)
    assert np.array_equal(s.psnr, s2.psnr)
