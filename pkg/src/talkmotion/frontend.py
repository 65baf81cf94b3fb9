"""Deterministic frame-level speech features.

Log-mel filterbank energies followed by a frozen random projection to the
model width. The projection is drawn once from a seeded PCG64 generator,
so a given ``(clip, config)`` always maps to the same features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .io import AudioClip
from .prosody import FRAME_LEN, HOP, frame_signal

N_FFT = 512
LOG_FLOOR = 1e-6


@dataclass(frozen=True)
class FrontendConfig:
    n_mels: int = 80
    frame_len: int = FRAME_LEN
    hop: int = HOP
    proj_seed: int = 0
    out_dim: int = 512


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=80, n_fft=N_FFT, sample_rate=16000, f_min=0.0, f_max=8000.0):
    """Triangular filters (unnormalized peak 1) over rfft bins; returns ``(weights, centers_hz)``."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (bins[None, :] - lo) / (mid - lo)
    down = (hi - bins[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down)), edges[1:-1]


def hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)


def frontend_features(a: AudioClip, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Log-mel energies, one row per analysis frame (same framing as prosody)."""
    frames = frame_signal(a.samples, cfg.frame_len, cfg.hop)
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.n_mels))
    mag = np.abs(np.fft.rfft(frames * hann(cfg.frame_len), n=N_FFT, axis=1))
    fb, _ = mel_filterbank(cfg.n_mels, N_FFT, a.sample_rate)
    return np.log(mag @ fb.T + LOG_FLOOR)


def projection_matrix(seed, n_in=80, n_out=512):
    bound = 1.0 / math.sqrt(n_in)
    return np.random.Generator(np.random.PCG64(seed)).uniform(-bound, bound, size=(n_in, n_out))


def fixed_projection(x, seed=0, out_dim=512) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ projection_matrix(seed, x.shape[1], out_dim)


class SpeechFrontend(TransformerMixin, BaseEstimator):
    """AudioClip -> (N' x out_dim) frozen features; ``fit`` is a no-op."""

    def __init__(self, n_mels=80, frame_len=FRAME_LEN, hop=HOP, proj_seed=0, out_dim=512):
        self.n_mels = n_mels
        self.frame_len = frame_len
        self.hop = hop
        self.proj_seed = proj_seed
        self.out_dim = out_dim

    @property
    def config(self):
        return FrontendConfig(self.n_mels, self.frame_len, self.hop, self.proj_seed, self.out_dim)

    def fit(self, X=None, y=None):
        return self

    def log_mel(self, a: AudioClip):
        return frontend_features(a, self.config)

    def transform(self, X):
        def one(a):
            return fixed_projection(frontend_features(a, self.config), self.proj_seed, self.out_dim)
        if isinstance(X, AudioClip):
            return one(X)
        return [one(a) for a in X]
