from dataclasses import replace

import numpy as np
import pytest

from uavad.config import SynthConfig
from uavad.data import load_split, read_manifest, to_unit
from uavad.errors import InvalidArgument
from uavad.synth import (Anomaly, Sprite, SynthSpec, clip_spec, gen_synthetic, motion_pair,
                         render, write_dataset)

SMALL = SynthConfig(height=32, width=32, train_clips=2, test_clips=4, frames=12)


def test_static_scene():
    frames, labels = render(SynthSpec(16, 16, 5))
    assert all(np.array_equal(frames[0], f) for f in frames)
    assert not labels.any()


def test_anomaly_window_count():
    spr = (Sprite(4, 4, 1, 0, 2, (255, 0, 0)),)
    _, labels = render(SynthSpec(16, 16, 30, sprites=spr, anomaly=Anomaly("speed", 10, 20)))
    assert labels.sum() == 10 and labels[10:20].all()


def test_scroll_wraps():
    frames, _ = render(SynthSpec(16, 16, 3, global_velocity=(2.0, -1.0)))
    assert np.array_equal(frames[1], np.roll(frames[0], (-1, 2), axis=(0, 1)))
    assert np.array_equal(frames[2], np.roll(frames[0], (-2, 4), axis=(0, 1)))


def test_sprite_translation():
    spr = (Sprite(4, 5, 2, 1, 1.5, (250, 10, 10)),)
    frames, _ = render(SynthSpec(16, 16, 3, sprites=spr))
    for t in range(3):
        assert tuple(frames[t, 5 + t, 4 + 2 * t]) == (250, 10, 10)


@pytest.mark.parametrize("kind", ["speed", "reverse", "new_object", "vanish"])
def test_anomalies_change_frames(kind):
    spr = (Sprite(8, 8, 1, 0, 3, (250, 10, 10)),)
    base, _ = render(SynthSpec(32, 32, 10, sprites=spr))
    odd, labels = render(SynthSpec(32, 32, 10, sprites=spr, anomaly=Anomaly(kind, 4, 8)))
    assert np.array_equal(base[:4], odd[:4])
    assert not np.array_equal(base[4:8], odd[4:8])
    assert labels.tolist() == [0] * 4 + [1] * 4 + [0] * 2


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        SynthSpec(0, 8, 2)
    with pytest.raises(InvalidArgument):
        SynthSpec(8, 8, 2, global_velocity=(9.0, 0.0))
    with pytest.raises(InvalidArgument):
        SynthSpec(8, 8, 5, anomaly=Anomaly("speed", 3, 7))
    with pytest.raises(InvalidArgument):
        SynthSpec(8, 8, 5, anomaly=Anomaly("teleport", 1, 2))
    with pytest.raises(InvalidArgument):
        gen_synthetic(replace(SMALL, anomaly_kinds=("teleport",)))
    with pytest.raises(InvalidArgument):
        gen_synthetic(replace(SMALL, anomaly_fraction=1.0))


def test_gen_synthetic():
    a, b = gen_synthetic(SMALL), gen_synthetic(SMALL)
    for x, y in zip(a.train + a.test, b.train + b.test):
        assert x.name == y.name
        assert np.array_equal(x.frames, y.frames) and np.array_equal(x.labels, y.labels)
    assert [c.name for c in a.train] == ["train/clip_000", "train/clip_001"]
    assert all(not c.labels.any() for c in a.train)
    n_pos = round(SMALL.anomaly_fraction * SMALL.frames)
    for c in a.test:
        assert c.labels.sum() == n_pos and c.frames.shape == (12, 32, 32, 3)
        assert c.labels[: SMALL.frames // 4].sum() == 0
    other = gen_synthetic(replace(SMALL, seed=1))
    assert not np.array_equal(other.train[0].frames, a.train[0].frames)


def test_clip_spec_streams_independent():
    s1 = clip_spec(SMALL, "test", 2, anomaly="vanish")
    s2 = clip_spec(replace(SMALL, test_clips=10), "test", 2, anomaly="vanish")
    assert s1 == s2



def test_write_dataset(tmp_path):
    ds = gen_synthetic(SMALL)
    entries = write_dataset(ds, tmp_path)
    assert len(read_manifest(tmp_path)) == len(entries) == 6
    clips = load_split(tmp_path, "test")
    for c, ref in zip(clips, ds.test):
        assert np.array_equal(c.frames, to_unit(ref.frames).transpose(0, 3, 1, 2))
        assert np.array_equal(c.labels, ref.labels)
        assert len((tmp_path / c.name / "labels.txt").read_text().splitlines()) == 12


def test_motion_pair():
    g, l = motion_pair(SMALL, 0)
    assert g.shape == l.shape == (12, 32, 32, 3)
    assert not np.array_equal(g[0], g[1])
    # same background: wherever no sprite covers it, the static clip shows the unshifted texture
    same = np.all(l[0] == g[0], axis=-1)
    assert same.mean() > 0.7
