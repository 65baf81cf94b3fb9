import numpy as np
import pytest

from talkmotion.io import SAMPLE_RATE, AudioClip, MotionSequence


def tone(freq, seconds=0.5, amp=1.0, sr=SAMPLE_RATE):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t))


def random_motion(rng, T, scale=0.2, fps=25.0):
    head = np.cumsum(rng.normal(0, scale, (T, 9)), axis=0)
    expr = np.cumsum(rng.normal(0, scale, (T, 50)), axis=0)
    return MotionSequence(head, expr, fps)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TOY_CONFIG = """\
[run]
plots = true
[dpse]
dim = 32
fused_dim = 32
heads = 4
groups = 4
[keypredictor]
layers = 2
heads = 4
dim = 32
[keypredictor_training]
steps = 50
learning_rate = 1e-3
[generator]
dim = 32
heads = 4
steps = 50
learning_rate = 1e-3
[noise]
steps = 10
"""


def write_toy_inputs(directory, seed=7):
    """A 0.5 s clip with T=12 motion, five tokens and a small config; returns the paths."""
    from talkmotion.io import TranscriptTokens, write_motion_csv, write_tokens, write_wav

    rng = np.random.default_rng(seed)
    t = np.arange(8000) / SAMPLE_RATE
    samples = 0.3 * np.sin(2 * np.pi * 150 * t) * (1 + np.sin(2 * np.pi * 4 * t)) / 2
    paths = {name: directory / name for name in ("a.wav", "m.csv", "tok.txt", "toy.toml")}
    write_wav(paths["a.wav"], AudioClip(samples))
    write_motion_csv(paths["m.csv"], random_motion(rng, 12))
    write_tokens(paths["tok.txt"], TranscriptTokens(np.array([5, 17, 3, 42, 8]), 256))
    paths["toy.toml"].write_text(TOY_CONFIG)
    return paths


@pytest.fixture
def toy(tmp_path):
    return write_toy_inputs(tmp_path)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
