from dataclasses import replace

import numpy as np
import pytest

from uavad.autodiff import Variable, grad_check, ops
from uavad.config import ModelConfig
from uavad.errors import DataError, InvalidArgument, ShapeError
from uavad.fdscm import fdscm_forward
from uavad.layers import Linear
from uavad.model import (Decoder, Encoder, Predictor, TemporalAggregate, fuse_branches,
                         load_state, predict_next, read_checkpoint, state_dict, write_checkpoint)

TINY = ModelConfig(height=32, width=32, clip_len=2, channels=(4, 8, 8, 8), d_state=2,
                   dilations=(1, 2), patch=2)


def clip(rng, B=1, T=2, H=32, W=32):
    return rng.uniform(-1, 1, size=(B, T, 3, H, W))


def test_encoder_scales(rng):
    enc = Encoder((4, 8, 8, 8), rng)
    feats = enc(Variable(clip(rng, H=64, W=64)))
    assert [f.shape[-1] for f in feats] == [16, 8, 4, 2]
    assert [f.shape[2] for f in feats] == [4, 8, 8, 8]
    with pytest.raises(InvalidArgument):
        enc(Variable(clip(rng, H=48, W=48)))


def test_encoder_is_per_frame(rng):
    enc = Encoder((4, 8, 8, 8), rng).eval()
    frame = clip(rng, T=1)
    feats = enc(Variable(np.repeat(frame, 3, axis=1)))
    for f in feats:
        assert np.array_equal(f.value[:, 0], f.value[:, 1])
        assert np.array_equal(f.value[:, 0], f.value[:, 2])


def test_fuse_branches(rng):
    proj = Linear(6, 3, rng)
    fb, ft = (Variable(rng.normal(size=(1, 6, 3, 8, 8))) for _ in range(2))
    assert fuse_branches(fb, ft, proj).shape == (1, 6, 3, 8, 8)
    proj.weight.value[...] = 0
    proj.bias.value[...] = 0
    assert np.all(fuse_branches(fb, ft, proj).value == 0)
    with pytest.raises(ShapeError):
        fuse_branches(fb, Variable(np.zeros((1, 6, 3, 4, 4))), proj)


def test_fuse_gradcheck(rng):
    proj = Linear(4, 2, rng)
    fb = Variable(rng.normal(size=(1, 2, 2, 2, 2)), requires_grad=True)
    ft = Variable(rng.normal(size=(1, 2, 2, 2, 2)), requires_grad=True)
    w = rng.normal(size=fb.shape)
    fn = lambda: ops.sum(ops.mul(fuse_branches(fb, ft, proj), w))
    assert grad_check(fn, [fb, ft, proj.weight, proj.bias]) < 1e-6


def test_temporal_aggregate(rng):
    agg = TemporalAggregate(1, 3, rng)
    agg.proj.weight.value[...] = np.eye(3)
    agg.proj.bias.value[...] = 0
    x = rng.normal(size=(2, 1, 3, 4, 4))
    assert np.allclose(agg(Variable(x)).value, x[:, 0], rtol=0, atol=1e-15)
    agg = TemporalAggregate(3, 2, rng)
    x = Variable(rng.normal(size=(1, 3, 2, 2, 2)), requires_grad=True)
    assert agg(x).shape == (1, 2, 2, 2)
    w = rng.normal(size=(1, 2, 2, 2))
    fn = lambda: ops.sum(ops.mul(agg(x), w))
    assert grad_check(fn, [x, agg.proj.weight, agg.proj.bias]) < 1e-6


def test_decoder_zero(rng):
    dec = Decoder((4, 8, 8, 8), rng)
    for name, p in dec.named_parameters():
        if name.endswith("bias"):
            p.value[...] = 0
    sizes = [(4, 8), (8, 4), (8, 2), (8, 1)]
    F = [Variable(np.zeros((1, c, s, s))) for c, s in sizes]
    out = dec(F, F)
    assert out.shape == (1, 3, 32, 32) and np.all(out.value == 0)
    with pytest.raises(ShapeError):
        dec(F[::-1], F[::-1])


def test_predictor_shape_range_determinism(rng):
    x = clip(rng, B=2)
    a = predict_next(Predictor(TINY), x)
    b = predict_next(Predictor(TINY), x)
    assert a.shape == (2, 3, 32, 32)
    assert np.all(np.abs(a) <= 1)
    assert np.array_equal(a, b)
    with pytest.raises(ShapeError):
        Predictor(TINY)(clip(rng, T=3))


def test_predict_next_restores_mode(rng):
    m = Predictor(TINY)
    assert m.training
    predict_next(m, clip(rng))
    assert m.training
    m.eval()
    predict_next(m, clip(rng))
    assert not m.training


def test_config_validation():
    with pytest.raises(InvalidArgument):
        ModelConfig(height=48)
    with pytest.raises(InvalidArgument):
        ModelConfig(clip_len=1)
    with pytest.raises(InvalidArgument):
        ModelConfig(dilations=(4,))
    with pytest.raises(InvalidArgument):
        ModelConfig(topology="serial")
    ModelConfig(dilations=(4,), mst=False)


def feats(rng, C=4):
    return Variable(rng.normal(size=(1, 2, C, 8, 8)))


def test_wiring_no_mamba(rng):
    m = Predictor(replace(TINY, stm=False))
    assert m.tdmm == []
    f = feats(rng)
    expect = fuse_branches(Variable(fdscm_forward(f.value)), f, m.fuse[0])
    assert np.allclose(m.scale_features(0, f).value, expect.value, rtol=0, atol=1e-12)


def test_wiring_no_fdscm(rng):
    m = Predictor(replace(TINY, tfd=False, stc=False))
    f = feats(rng)
    expect = fuse_branches(f, m.tdmm[0](f), m.fuse[0])
    assert np.array_equal(m.scale_features(0, f).value, expect.value)


def test_wiring_parallel_and_cascaded(rng):
    m = Predictor(TINY)
    f = feats(rng)
    expect = fuse_branches(fdscm_forward(f), m.tdmm[0](f), m.fuse[0])
    assert np.array_equal(m.scale_features(0, f).value, expect.value)
    mc = Predictor(replace(TINY, topology="cascaded"))
    assert mc.fuse == []
    assert np.array_equal(mc.scale_features(0, f).value, mc.tdmm[0](fdscm_forward(f)).value)


def test_wiring_all_off_is_identity(rng):
    m = Predictor(replace(TINY, tfd=False, stc=False, stm=False,
                                    topology="cascaded"))
    f = feats(rng)
    assert m.scale_features(0, f) is f


def test_checkpoint_round_trip(tmp_path, rng):
    m = Predictor(TINY)
    m(clip(rng, B=2))  # move BN running stats away from their init
    sd = state_dict(m)
    write_checkpoint(tmp_path / "m.ftdm", "cfg text", sd)
    text, tensors = read_checkpoint(tmp_path / "m.ftdm")
    assert text == "cfg text"
    assert list(tensors) == list(sd)
    for k in sd:
        assert np.array_equal(tensors[k], sd[k])
    m2 = Predictor(TINY, rng=np.random.default_rng(99))
    load_state(m2, tensors)
    x = clip(rng)
    assert np.array_equal(predict_next(m, x), predict_next(m2, x))


def test_checkpoint_errors(tmp_path):
    p = tmp_path / "bad.ftdm"
    p.write_bytes(b"XXXX")
    with pytest.raises(DataError):
        read_checkpoint(p)
    write_checkpoint(p, "c", {"w": np.ones((2, 3)), "s": np.array(4.0)})
    assert read_checkpoint(p)[1]["s"].shape == ()
    data = p.read_bytes()
    p.write_bytes(data[:-5])
    with pytest.raises(DataError):
        read_checkpoint(p)
    p.write_bytes(data[:4] + b"\x09" + data[5:])
    with pytest.raises(DataError, match="version"):
        read_checkpoint(p)
    with pytest.raises(DataError, match="missing"):
        load_state(Predictor(TINY), {})
