"""Diversity and beat-alignment scores for generated head motion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError
from .io import AudioClip, MotionSequence
from .kel import gaussian_smooth
from .prosody import frame_energy


@dataclass(frozen=True)
class BeatConfig:
    sigma: float = 3.0
    motion_smoothing_sigma: float = 2.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.motion_smoothing_sigma > 0):
            raise ConfigurationError("beat sigmas must be > 0")


def diversity(sequences) -> float:
    """Mean over clips of the temporal std of head pose, averaged over the 9 dimensions."""
    if isinstance(sequences, MotionSequence):
        sequences = [sequences]
    sequences = list(sequences)
    if not sequences:
        raise ConfigurationError("diversity needs at least one sequence")
    # centering on the first frame first makes static motion score exactly 0
    return float(np.mean([(m.head_pose - m.head_pose[:1]).std(axis=0).mean()
                          for m in sequences]))


def head_speed(m: MotionSequence) -> np.ndarray:
    """Per-frame head-pose speed; frame 0 repeats frame 1 so it is not a spurious minimum."""
    speed = np.zeros(m.n_frames)
    if m.n_frames > 1:
        speed[1:] = np.linalg.norm(np.diff(m.head_pose, axis=0), axis=1)
        speed[0] = speed[1]
    return speed


def strict_local_minima(s) -> np.ndarray:
    s = np.asarray(s)
    if s.size < 3:
        return np.zeros(0, dtype=np.int64)
    mid = s[1:-1]
    return np.flatnonzero((mid < s[:-2]) & (mid < s[2:])) + 1


def motion_beats(m: MotionSequence, cfg: BeatConfig = BeatConfig()) -> np.ndarray:
    """Frames where smoothed head speed has a strict local minimum."""
    if m.n_frames < 3:
        return np.zeros(0, dtype=np.int64)
    return strict_local_minima(gaussian_smooth(head_speed(m), cfg.motion_smoothing_sigma))


def onset_strength(a: AudioClip, frame_rate: float) -> np.ndarray:
    hop = int(round(a.sample_rate / frame_rate))
    energy = frame_energy(a, hop, hop)
    onset = np.zeros(energy.size)
    onset[1:] = np.maximum(0.0, np.diff(energy))
    return onset


def audio_beats(a: AudioClip, cfg: BeatConfig = BeatConfig(), frame_rate=25.0,
                n_frames=None) -> np.ndarray:
    """Accent frames: peaks of smoothed onset strength above mean + 0.5 std.

    Frames are on the motion grid (``frame_rate``); ``n_frames`` truncates
    to the motion length.
    """
    onset = onset_strength(a, frame_rate)
    if n_frames is not None:
        onset = onset[:n_frames]
    if onset.size < 3 or not np.any(onset > 0):
        return np.zeros(0, dtype=np.int64)
    s = gaussian_smooth(onset, cfg.motion_smoothing_sigma)
    tau = s.mean() + 0.5 * s.std()
    mid = s[1:-1]
    return np.flatnonzero((mid > s[:-2]) & (mid >= s[2:]) & (mid > tau)) + 1


def beat_align(motion_b, audio_b, sigma=3.0) -> float:
    """Mean over motion beats of exp(-d^2 / (2 sigma^2)), d = distance to the nearest audio beat."""
    if not sigma > 0:
        raise ConfigurationError("sigma must be > 0")
    mb = np.asarray(motion_b, dtype=np.float64).reshape(-1)
    ab = np.asarray(audio_b, dtype=np.float64).reshape(-1)
    if mb.size == 0 or ab.size == 0:
        return 0.0
    d2 = np.min((mb[:, None] - ab[None, :]) ** 2, axis=1)
    return float(np.mean(np.exp(-d2 / (2.0 * sigma**2))))


def beat_align_score(m: MotionSequence, a: AudioClip, cfg: BeatConfig = BeatConfig()) -> float:
    return beat_align(motion_beats(m, cfg),
                      audio_beats(a, cfg, m.frame_rate, m.n_frames), cfg.sigma)
