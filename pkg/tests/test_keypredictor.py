import math

import numpy as np
import pytest

from talkmotion.exceptions import ConfigurationError, DimensionError
from talkmotion.io import KeyframeSeq, TranscriptTokens
from talkmotion.keypredictor import (KeyframePredictor, KeyPredictorConfig, class_weights,
                                     keyframe_f1, weighted_bce)
from talkmotion.kernels import Parameter, grad_check, ops

F = 6


def tiny(**kw):
    base = dict(layers=2, heads=2, dim=8, feature_dim=F, vocab_size=16, steps=30,
                batch_size=2, learning_rate=3e-3, random_state=0)
    return KeyframePredictor(**{**base, **kw})


def data(n=3, T=10, seed=0):
    rng = np.random.default_rng(seed)
    X = [(rng.normal(size=(T, F)), TranscriptTokens(rng.integers(0, 16, 4), 16)) for _ in range(n)]
    y = [KeyframeSeq((rng.random(T) < 0.3).astype(int)) for _ in range(n)]
    return X, y


def test_class_weight_examples():
    assert class_weights(np.array([0, 1] * 50)) == (1.0, 1.0)
    k = np.zeros(100)
    k[:10] = 1
    w0, w1 = class_weights(k)
    assert w1 == 5.0 and w0 == pytest.approx(100 / 180, abs=1e-12)
    assert class_weights(np.zeros(100)) == (pytest.approx(0.5), 10.0)


def test_weighted_bce_examples():
    assert float(weighted_bce(np.array([0.5]), np.array([1]), 1.0, 2.0).value) == \
        pytest.approx(2 * math.log(2), abs=1e-12)
    k = np.array([0, 1, 1, 0, 1])
    perfect = float(weighted_bce(k.astype(float), k, 0.7, 3.0).value)
    assert 0 <= perfect <= k.size * 3.0 * 1.2e-7
    with pytest.raises(DimensionError):
        weighted_bce(np.full(3, 0.5), np.zeros(4), 1, 1)


def test_weighted_bce_gradient_wrt_logits():
    rng = np.random.default_rng(0)
    z = Parameter("z", rng.normal(size=20))
    k = (rng.random(20) < 0.4).astype(float)
    assert grad_check(lambda t: weighted_bce(ops.sigmoid(t.param(z)), k, 0.8, 1.7), [z]) < 1e-6


def test_f1():
    assert keyframe_f1([0, 0], [0, 0]) == 1.0
    assert keyframe_f1([1, 0, 1, 0], [1, 0, 0, 0]) == pytest.approx(2 / 3)


def test_config_weight_invariant():
    KeyPredictorConfig(w0=0.5, w1=2.0)
    with pytest.raises(ConfigurationError):
        KeyPredictorConfig(w0=2.0, w1=1.0)
    with pytest.raises(ConfigurationError):
        KeyPredictorConfig(w0=1.0)
    with pytest.raises(ConfigurationError):
        tiny(w0=1.0, w1=1.0).fit(*data())


def test_causality():
    X, y = data(1, 12)
    kp = tiny(steps=1).fit(X, y)
    f, tok = X[0]
    base = kp.predict_proba_teacher_forced(f, tok, y[0])
    g = f.copy()
    g[7:] += 5.0
    moved = kp.predict_proba_teacher_forced(g, tok, y[0])
    assert np.allclose(base[:7], moved[:7], atol=1e-12)
    assert not np.allclose(base[7:], moved[7:])
    assert np.all((base > 0) & (base < 1))


def test_empty_transcript_and_empty_features():
    X, y = data(2, 8)
    kp = tiny(steps=2).fit(X, y)
    empty = TranscriptTokens(np.zeros(0, dtype=int), 16)
    p, k = kp.predict_proba_free_running(X[0][0], empty)
    assert p.shape == (8,) and np.all(np.isfinite(p))
    p0, k0 = kp.predict_proba_free_running(np.zeros((0, F)), X[0][1])
    assert p0.size == 0 and len(k0) == 0
    assert kp.predict_proba_teacher_forced(np.zeros((0, F)), X[0][1], []).size == 0


def test_free_running_equals_teacher_forcing_on_own_flags():
    X, y = data(2, 9)
    kp = tiny(steps=10).fit(X, y)
    p, k = kp.predict_proba_free_running(*X[1])
    tf = kp.predict_proba_teacher_forced(X[1][0], X[1][1], k)
    assert np.allclose(p, tf, atol=1e-12)
    assert np.array_equal(k.flags, (p > 0.5).astype(int))


def test_training_is_finite_decreasing_and_reproducible():
    X, y = data(3, 10)
    a = tiny(steps=40).fit(X, y)
    b = tiny(steps=40).fit(X, y)
    assert np.all(np.isfinite(a.loss_curve_))
    assert np.max(np.abs(np.array(a.loss_curve_) - b.loss_curve_)) <= 1e-9
    assert np.mean(a.loss_curve_[-5:]) < np.mean(a.loss_curve_[:5])
    assert a.weights_ == class_weights(np.concatenate([k.flags for k in y]))


def test_fit_errors():
    with pytest.raises(ConfigurationError):
        tiny().fit([], [])
    X, y = data(2)
    with pytest.raises(DimensionError):
        tiny().fit(X, y[:1])
    with pytest.raises(DimensionError):
        tiny().fit([(np.zeros((5, F + 1)), X[0][1])], [np.zeros(5)])
    with pytest.raises(ConfigurationError):
        tiny(max_len=5).fit(X, y)


def test_sklearn_surface_and_checkpoint(tmp_path):
    X, y = data(2, 8)
    kp = tiny(steps=5).fit(X, y)
    assert kp.get_params()["dim"] == 8
    preds = kp.predict(X)
    assert len(preds) == 2 and all(len(k) == 8 for k in preds)
    assert 0.0 <= kp.teacher_forced_f1(X, y) <= 1.0
    kp.save(tmp_path / "kp.json")
    back = KeyframePredictor.load(tmp_path / "kp.json")
    assert back.weights_ == kp.weights_
    assert np.array_equal(back.predict_proba(X)[0], kp.predict_proba(X)[0])
