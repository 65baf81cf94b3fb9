"""Frame-level f0 and energy with per-utterance normalization.

Defaults (400-sample frames, 320-sample hop at 16 kHz) give a 50 Hz
feature rate, the same grid as the speech frontend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigurationError, DimensionError
from .io import AudioClip

FRAME_LEN = 400
HOP = 320
RMS_FLOOR = 1e-4
OCTAVE_GUARD = 0.9


def n_frames(n_samples: int, frame_len: int = FRAME_LEN, hop: int = HOP) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame_signal(x, frame_len: int = FRAME_LEN, hop: int = HOP) -> np.ndarray:
    """Stack frames row-wise without padding; shape (n_frames, frame_len)."""
    if frame_len < 1 or hop < 1:
        raise ConfigurationError("frame_len and hop must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    n = n_frames(x.size, frame_len, hop)
    if n == 0:
        return np.zeros((0, frame_len))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def frame_energy(a: AudioClip, frame_len: int = FRAME_LEN, hop: int = HOP) -> np.ndarray:
    frames = frame_signal(a.samples, frame_len, hop)
    return np.sqrt(np.mean(frames**2, axis=1))


def normalized_autocorrelation(frame, min_lag: int, max_lag: int) -> np.ndarray:
    """NCCF r(lag) = <x[:-lag], x[lag:]> / sqrt(|x[:-lag]|^2 |x[lag:]|^2)."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.size
    out = np.zeros(max_lag - min_lag + 1)
    csum = np.concatenate([[0.0], np.cumsum(frame**2)])
    for i, lag in enumerate(range(min_lag, max_lag + 1)):
        head, tail = frame[: n - lag], frame[lag:]
        e_head = csum[n - lag]
        e_tail = csum[n] - csum[lag]
        denom = np.sqrt(e_head * e_tail)
        out[i] = float(head @ tail) / denom if denom > 0 else 0.0
    return out


def _pick_lag(r):
    """First interior local maximum reaching OCTAVE_GUARD of the best value.

    ``r`` carries one guard lag on each side of the search band.
    """
    inner = r[1:-1]
    best = inner.max()
    for i in range(1, r.size - 1):
        if r[i] >= r[i - 1] and r[i] >= r[i + 1] and r[i] >= OCTAVE_GUARD * best:
            return i
    return 1 + int(np.argmax(inner))


def estimate_f0(
    a: AudioClip,
    frame_len: int = FRAME_LEN,
    hop: int = HOP,
    band=(60.0, 400.0),
    voicing_threshold: float = 0.3,
) -> np.ndarray:
    """Autocorrelation pitch per frame; 0 marks unvoiced frames."""
    sr = a.sample_rate
    f_min, f_max = float(band[0]), float(band[1])
    if not (0 < f_min < f_max < sr / 2):
        raise ConfigurationError(f"f0 band {band} must satisfy 0 < f_min < f_max < {sr / 2}")
    min_lag = max(1, int(np.floor(sr / f_max)))
    max_lag = int(np.ceil(sr / f_min))
    if max_lag + 1 >= frame_len - 1:
        raise ConfigurationError("frame too short for the requested f0 band")
    frames = frame_signal(a.samples, frame_len, hop)
    f0 = np.zeros(frames.shape[0])
    for k, frame in enumerate(frames):
        if np.sqrt(np.mean(frame**2)) < RMS_FLOOR:
            continue
        lo = max(1, min_lag - 1)
        r = normalized_autocorrelation(frame, lo, max_lag + 1)
        if lo == min_lag:
            r = np.concatenate([[-np.inf], r])
        i = _pick_lag(r)
        if r[i] < voicing_threshold:
            continue
        denom = r[i - 1] - 2.0 * r[i] + r[i + 1]
        shift = 0.5 * (r[i - 1] - r[i + 1]) / denom if np.isfinite(denom) and denom < 0 else 0.0
        f = sr / (min_lag - 1 + i + shift)
        if f_min <= f <= f_max:
            f0[k] = f
    return f0


def normalize_per_utterance(f0, energy) -> np.ndarray:
    """Z-score energy over all frames and f0 over voiced frames (N' x 2)."""
    f0 = np.asarray(f0, dtype=np.float64)
    energy = np.asarray(energy, dtype=np.float64)
    if f0.shape != energy.shape:
        raise DimensionError(f"f0 {f0.shape} and energy {energy.shape} differ in length")
    out = np.zeros((f0.size, 2))
    if f0.size == 0:
        return out
    voiced = f0 > 0
    if voiced.any():
        mu, sd = f0[voiced].mean(), f0[voiced].std()
        if sd >= 1e-8:
            out[voiced, 0] = (f0[voiced] - mu) / sd
    sd = energy.std()
    if sd >= 1e-8:
        out[:, 1] = (energy - energy.mean()) / sd
    return out


@dataclass(frozen=True)
class ProsodySeq:
    f0: np.ndarray
    energy: np.ndarray
    normalized: np.ndarray

    def __len__(self):
        return int(self.f0.size)


def extract_prosody(a: AudioClip, frame_len=FRAME_LEN, hop=HOP, band=(60.0, 400.0),
                    voicing_threshold=0.3) -> ProsodySeq:
    f0 = estimate_f0(a, frame_len, hop, band, voicing_threshold)
    energy = frame_energy(a, frame_len, hop)
    return ProsodySeq(f0, energy, normalize_per_utterance(f0, energy))


class ProsodyExtractor(TransformerMixin, BaseEstimator):
    def __init__(self, frame_len=FRAME_LEN, hop=HOP, f0_min=60.0, f0_max=400.0,
                 voicing_threshold=0.3):
        self.frame_len = frame_len
        self.hop = hop
        self.f0_min = f0_min
        self.f0_max = f0_max
        self.voicing_threshold = voicing_threshold

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        """AudioClip -> ProsodySeq (or a list of them for a list input)."""
        def one(a):
            return extract_prosody(a, self.frame_len, self.hop, (self.f0_min, self.f0_max),
                                   self.voicing_threshold)
        if isinstance(X, AudioClip):
            return one(X)
        return [one(a) for a in X]
