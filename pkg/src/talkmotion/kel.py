"""Ground-truth keyframes from motion coefficients.

Per-frame variation of head pose (relative rotation angle plus the
Euclidean step of neck/camera parameters) and of expression coefficients
is smoothed with a Gaussian and thresholded at ``mean + alpha * std``;
strict local maxima above the threshold become keyframes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigurationError
from .io import KeyframeSeq, MotionSequence, PoseDecomposition, decompose_pose


@dataclass(frozen=True)
class KeyframePolicy:
    gaussian_sigma: float = 2.0
    threshold_alpha: float = 0.5
    min_separation: int = 0

    def __post_init__(self):
        if not self.gaussian_sigma > 0:
            raise ConfigurationError("gaussian_sigma must be > 0")
        if self.threshold_alpha < 0:
            raise ConfigurationError("threshold_alpha must be >= 0")
        if self.min_separation < 0:
            raise ConfigurationError("min_separation must be >= 0")


def axis_angle_to_matrix(r) -> np.ndarray:
    """Rodrigues formula; second-order Taylor expansion near the identity."""
    r = np.asarray(r, dtype=np.float64)
    theta = math.sqrt(float(r @ r))
    K = np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / theta
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def relative_rotation_angle(r_t, r_prev) -> float:
    """Angle in [0, pi] of R(r_t) R(r_prev)^T."""
    R = axis_angle_to_matrix(r_t) @ axis_angle_to_matrix(r_prev).T
    cos_theta = min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0))
    # atan2 keeps full precision near 0 and pi where arccos loses digits
    sin_theta = 0.5 * math.sqrt(
        (R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2
    )
    return math.atan2(sin_theta, cos_theta)


def pose_variation(d: PoseDecomposition) -> np.ndarray:
    T = d.rotation.shape[0]
    out = np.zeros(T)
    if T < 2:
        return out
    step = np.linalg.norm(np.diff(d.combined_nc, axis=0), axis=1)
    for t in range(1, T):
        out[t] = relative_rotation_angle(d.rotation[t], d.rotation[t - 1]) + step[t - 1]
    return out


def expression_variation(m: MotionSequence) -> np.ndarray:
    out = np.zeros(m.n_frames)
    out[1:] = np.linalg.norm(np.diff(m.expression, axis=0), axis=1)
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_smooth(v, sigma: float) -> np.ndarray:
    """Gaussian filter truncated at ceil(3 sigma), half-sample symmetric padding."""
    if not sigma > 0:
        raise ConfigurationError("sigma must be > 0")
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    w = gaussian_kernel(sigma)
    radius = (w.size - 1) // 2
    padded = np.pad(v, radius, mode="symmetric")
    return np.convolve(padded, w, mode="valid")


def peak_mask(smoothed, threshold) -> np.ndarray:
    s = np.asarray(smoothed)
    mask = np.zeros(s.size, dtype=bool)
    if s.size < 3:
        return mask
    mid = s[1:-1]
    mask[1:-1] = (mid > s[:-2]) & (mid >= s[2:]) & (mid > threshold)
    return mask


def _enforce_separation(mask, values, min_separation):
    peaks = np.flatnonzero(mask)
    # highest first; equal heights keep the earlier frame
    order = sorted(peaks, key=lambda i: (-values[i], i))
    kept = []
    for i in order:
        if all(abs(i - j) >= min_separation for j in kept):
            kept.append(i)
    out = np.zeros_like(mask)
    out[kept] = True
    return out


def select_keyframes(v, policy: KeyframePolicy = KeyframePolicy()) -> KeyframeSeq:
    v = np.asarray(v, dtype=np.float64)
    if v.size < 3:
        return KeyframeSeq(np.zeros(v.size, dtype=np.int8))
    s = gaussian_smooth(v, policy.gaussian_sigma)
    tau = s.mean() + policy.threshold_alpha * s.std()
    mask = peak_mask(s, tau)
    if policy.min_separation > 0:
        mask = _enforce_separation(mask, s, policy.min_separation)
    return KeyframeSeq(mask.astype(np.int8))


def keyframe_threshold(v, policy: KeyframePolicy = KeyframePolicy()) -> float:
    s = gaussian_smooth(v, policy.gaussian_sigma)
    return float(s.mean() + policy.threshold_alpha * s.std())


def extract_targets(m: MotionSequence, policy: KeyframePolicy = KeyframePolicy()):
    """Return ``(k_head, k_expr)`` keyframe sequences for a motion clip."""
    k_h = select_keyframes(pose_variation(decompose_pose(m)), policy)
    k_e = select_keyframes(expression_variation(m), policy)
    return k_h, k_e


class KeyframeExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping motion clips to keyframe targets.

    ``transform`` accepts a single :class:`MotionSequence` or a list of them
    and returns ``(k_head, k_expr)`` pairs in the same arrangement.
    """

    def __init__(self, gaussian_sigma=2.0, threshold_alpha=0.5, min_separation=0):
        self.gaussian_sigma = gaussian_sigma
        self.threshold_alpha = threshold_alpha
        self.min_separation = min_separation

    @property
    def policy(self) -> KeyframePolicy:
        return KeyframePolicy(self.gaussian_sigma, self.threshold_alpha, self.min_separation)

    def fit(self, X=None, y=None):
        self.policy_ = self.policy
        return self

    def transform(self, X):
        policy = self.policy
        if isinstance(X, MotionSequence):
            return extract_targets(X, policy)
        return [extract_targets(m, policy) for m in X]

    def variation(self, m: MotionSequence):
        """Raw ``(delta_head, delta_expr)`` series, handy for plotting."""
        return pose_variation(decompose_pose(m)), expression_variation(m)
