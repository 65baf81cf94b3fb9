import numpy as np
import pytest

import oracles
from conftest import tone
from talkmotion.dpse import DpseConfig, DualPathSpeechEncoder, MSDCBlock, pooled_lengths
from talkmotion.exceptions import ConfigurationError, DataError, DimensionError
from talkmotion.io import AudioClip
from talkmotion.kernels import ParameterStore, Tape, grad_check, ops
from talkmotion.prosody import extract_prosody

SMALL = dict(dim=16, heads=2, groups=4, fused_dim=16, random_state=3)


def small(**kw):
    return DualPathSpeechEncoder(**{**SMALL, **kw}).fit()


def test_msdc_zero_projection_is_identity(rng):
    store = ParameterStore()
    blk = MSDCBlock(store, "m", 8, (1, 2), 3, 2, rng)
    for p in store:
        if p.name.startswith("m.fuse"):
            p.data[...] = 0.0
    x = rng.normal(size=(6, 8))
    assert np.array_equal(blk(Tape(), x).value, x)


def test_msdc_single_branch_oracle(rng):
    D = 8
    store = ParameterStore()
    blk = MSDCBlock(store, "m", D, (2,), 3, 2, rng)
    x = rng.normal(size=(4, D))
    P = {p.name: p.data for p in store}
    y = oracles.direct_conv(x, P["m.branch0.dw_kernel"], 2)
    yg = y.reshape(4, 2, 4)
    yn = ((yg - yg.mean(-1, keepdims=True)) / np.sqrt(yg.var(-1, keepdims=True) + 1e-5)).reshape(4, D)
    yn = yn * P["m.branch0.gn_gain"] + P["m.branch0.gn_bias"]
    w = yn @ P["m.branch0.widen.weight"] + P["m.branch0.widen.bias"]
    g = w[:, :D] / (1 + np.exp(-w[:, D:]))
    pw = g @ P["m.branch0.pointwise.weight"] + P["m.branch0.pointwise.bias"]
    ref = x + pw @ P["m.fuse.weight"] + P["m.fuse.bias"]
    assert np.max(np.abs(blk(Tape(), x).value - ref)) < 1e-12


def test_msdc_rejects_even_kernel(rng):
    with pytest.raises(ConfigurationError):
        MSDCBlock(ParameterStore(), "m", 8, (1,), 4, 2, rng)


def test_pooled_lengths():
    assert pooled_lengths(12) == (3, 6, 12)
    assert pooled_lengths(1) == (1, 1, 1)
    with pytest.raises(ConfigurationError):
        pooled_lengths(0)


def test_head_branch_constant_input_gives_constant_output():
    enc = small()
    for p in enc.params_:
        if p.name.endswith(".attn.wo") or ".ff.outer." in p.name:
            p.data[...] = 0.0
    h_s = np.tile(np.random.default_rng(0).normal(size=16), (25, 1))
    f_h = enc.head_pose_branch(Tape(), h_s, 12).value
    assert f_h.shape == (12, 16)
    assert np.allclose(f_h, f_h[0], atol=1e-12)


@pytest.mark.parametrize("n", [1, 3, 40])
def test_head_branch_shape(n):
    enc = small()
    h_s = np.random.default_rng(n).normal(size=(n, 16))
    assert enc.head_pose_branch(Tape(), h_s, 7).shape == (7, 16)


def test_film_identity_and_zero_prosody(rng):
    enc = small()
    h_s = rng.normal(size=(10, 16))
    enc.params_["dpse.expr.film_gamma.weight"].data[...] = 0.0
    enc.params_["dpse.expr.film_beta.weight"].data[...] = 0.0
    enc.params_["dpse.expr.film_beta.bias"].data[...] = 0.0
    assert np.array_equal(enc.modulate(Tape(), h_s, rng.normal(size=(10, 2))).value, h_s)

    enc = small()
    enc.params_["dpse.expr.film_beta.bias"].data[...] = 0.0
    plain = small(use_prosody=False)
    plain.params_.load_state_dict(enc.params_.state_dict())
    a = enc.expression_branch(Tape(), h_s, np.zeros((10, 2)), 6).value
    b = plain.expression_branch(Tape(), h_s, np.zeros((10, 2)), 6).value
    assert np.array_equal(a, b)


def test_film_gradients(rng):
    enc = small()
    h_s = rng.normal(size=(10, 16))
    pros = rng.normal(size=(10, 2))
    r = rng.normal(size=(6, 16))
    params = [enc.params_[n] for n in ("dpse.expr.film_gamma.weight", "dpse.expr.film_beta.weight")]
    err = grad_check(lambda t: ops.sum(enc.expression_branch(t, h_s, pros, 6) * r), params)
    assert err < 1e-4


def test_prosody_length_mismatch(rng):
    with pytest.raises(DimensionError):
        small().modulate(Tape(), rng.normal(size=(10, 16)), np.zeros((9, 2)))


def test_forward_matches_stage_composition():
    enc = small()
    clip = tone(150, 0.5, amp=0.5)
    f_h, f_e = enc.encode(clip, 12)
    assert f_h.shape == f_e.shape == (12, 16)
    t = Tape()
    h_s = enc.speech_hidden(t, enc.frozen_features(clip))
    pros = extract_prosody(clip).normalized
    assert np.array_equal(f_h, enc.head_pose_branch(t, h_s, 12).value)
    assert np.array_equal(f_e, enc.expression_branch(t, h_s, pros, 12).value)
    again = enc.encode(clip, 12)
    assert np.array_equal(again[0], f_h) and np.array_equal(again[1], f_e)


def test_dropout_only_in_training():
    enc = small(dropout=0.5)
    clip = tone(150, 0.3, amp=0.5)
    rng = np.random.default_rng(0)
    a = enc.forward(Tape(), clip, 5, training=True, rng=rng)[0].value
    b = enc.forward(Tape(), clip, 5)[0].value
    assert not np.allclose(a, b)
    assert np.array_equal(b, enc.encode(clip, 5)[0])


def test_fused_dim_projection():
    enc = small(fused_dim=12)
    f_h, f_e = enc.encode(tone(150, 0.3, amp=0.5), 4)
    assert f_h.shape == f_e.shape == (4, 12)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        small(dilations=(1, 2))
    with pytest.raises(ConfigurationError):
        small(heads=3)
    with pytest.raises(ConfigurationError):
        small(groups=5)
    with pytest.raises(DataError):
        small().encode(AudioClip(np.zeros(100)), 3)
    with pytest.raises(ConfigurationError):
        small().encode(tone(150, 0.3), 0)


def test_params_and_checkpoint(tmp_path):
    enc = small()
    assert enc.get_params()["dim"] == 16
    assert DualPathSpeechEncoder.from_config(DpseConfig()).get_params()["dim"] == 512
    enc.save(tmp_path / "enc.json")
    back = DualPathSpeechEncoder.load(tmp_path / "enc.json")
    clip = tone(200, 0.3, amp=0.5)
    assert np.array_equal(back.encode(clip, 5)[1], enc.encode(clip, 5)[1])
    assert back.dilations == (1, 2, 4)
