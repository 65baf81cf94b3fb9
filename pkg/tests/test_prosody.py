import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tone
from talkmotion.exceptions import ConfigurationError, DimensionError
from talkmotion.io import AudioClip
from talkmotion.prosody import (ProsodyExtractor, estimate_f0, extract_prosody, frame_energy,
                                frame_signal, n_frames, normalize_per_utterance,
                                normalized_autocorrelation)


def test_frame_count_formula():
    assert n_frames(399) == 0
    assert n_frames(400) == 1
    assert n_frames(400 + 320 * 5) == 6
    assert frame_signal(np.arange(1000.0)).shape == (n_frames(1000), 400)


def test_energy_examples():
    assert np.allclose(frame_energy(AudioClip(np.full(4000, 0.3))), 0.3, atol=1e-15)
    assert not frame_energy(AudioClip(np.zeros(4000))).any()
    # 400-sample frames hold exactly 5 periods of a 200 Hz sine
    e = frame_energy(tone(200, 0.5))
    assert np.all(np.abs(e - np.sqrt(0.5)) < 0.01)
    assert frame_energy(AudioClip(np.zeros(100))).size == 0


def test_nccf_matches_naive_loop(rng):
    x = rng.normal(size=400)
    r = normalized_autocorrelation(x, 40, 60)
    for i, lag in enumerate(range(40, 61)):
        a, b = x[:-lag], x[lag:]
        ref = sum(a * b) / np.sqrt(sum(a * a) * sum(b * b))
        assert abs(r[i] - ref) < 1e-12


@pytest.mark.parametrize("freq", [100, 220, 80, 350])
def test_tone_pitch(freq):
    f0 = estimate_f0(tone(freq, 0.5))
    assert f0.size > 2
    assert np.all(np.abs(f0 - freq) <= 2.0)


def test_silence_and_noise_unvoiced(rng):
    assert not estimate_f0(AudioClip(np.zeros(8000))).any()
    noise = AudioClip(np.clip(rng.normal(0, 0.2, 8000), -1, 1))
    assert np.mean(estimate_f0(noise) > 0) < 0.2


def test_band_errors():
    with pytest.raises(ConfigurationError):
        estimate_f0(tone(100), band=(0, 400))
    with pytest.raises(ConfigurationError):
        estimate_f0(tone(100), band=(100, 9000))
    with pytest.raises(ConfigurationError):
        estimate_f0(tone(100), band=(300, 200))


def test_f0_entries_in_band(rng):
    sig = np.concatenate([tone(150, 0.2).samples, np.zeros(1600), 0.1 * rng.normal(size=3200)])
    f0 = estimate_f0(AudioClip(np.clip(sig, -1, 1)), band=(70.0, 300.0))
    assert np.all((f0 == 0) | ((f0 >= 70) & (f0 <= 300)))


def test_normalize_examples():
    out = normalize_per_utterance([0, 100, 0, 300], [1, 1, 1, 1])
    assert np.allclose(out[:, 0], [0, -1, 0, 1], atol=1e-12)
    assert not out[:, 1].any()
    assert normalize_per_utterance([], []).shape == (0, 2)
    with pytest.raises(DimensionError):
        normalize_per_utterance([1, 2], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 400), min_size=1, max_size=40),
       st.lists(st.floats(0, 1), min_size=40, max_size=40))
def test_normalize_zscore_property(f0, energy):
    f0 = np.array(f0)
    energy = np.array(energy[: f0.size])
    out = normalize_per_utterance(f0, energy)
    voiced = f0 > 0
    if voiced.any():
        assert abs(out[voiced, 0].mean()) < 1e-6
        assert not out[~voiced, 0].any()
        if f0[voiced].std() >= 1e-8:
            assert abs(out[voiced, 0].std() - 1) < 1e-6
    if energy.std() >= 1e-8:
        assert abs(out[:, 1].mean()) < 1e-6 and abs(out[:, 1].std() - 1) < 1e-6
    else:
        assert not out[:, 1].any()


def test_gain_invariance_of_normalized_prosody():
    sig = tone(180, 0.5).samples * np.linspace(0.2, 1.0, 8000)
    a = extract_prosody(AudioClip(0.5 * sig))
    b = extract_prosody(AudioClip(sig))
    assert np.allclose(a.normalized, b.normalized, atol=1e-9)


def test_extractor_estimator():
    ex = ProsodyExtractor(f0_min=70.0)
    p = ex.fit().transform(tone(120))
    assert len(p) == p.normalized.shape[0] == p.energy.size
    assert len(ex.transform([tone(120), tone(200)])) == 2
