"""Dual-path diffusion generator for head-pose and expression coefficients.

Each path is an x0-predicting transformer denoiser conditioned on
frame-aligned speech features, a keyframe flag sequence and transcript
tokens (the token embedding table is shared by both paths). Training
minimizes

    lambda_mr * L_mr + lambda_bce * L_bce + lambda_diff * (lambda1 * L_rec + lambda2 * L_vel)

where ``L_bce`` comes from the separately trained keyframe predictor and
therefore contributes to the reported total but not to the gradients.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .base import TapeEstimator
from .exceptions import ConfigurationError, DimensionError
from .io import N_EXPR, N_POSE, KeyframeSeq, TranscriptTokens
from .kernels import AdamW, Tape, ops
from .kernels.layers import DecoderLayer, Embedding, LayerNorm, Linear
from .kernels.tape import tape_of, value

log = logging.getLogger(__name__)

PATH_CHANNELS = {"head": N_POSE, "expr": N_EXPR}
DEFAULT_RESOLUTIONS = ((8, 2), (16, 4), (32, 8))


# --- noise schedule -------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSchedule:
    """Cosine schedule; ``alphas_bar[t]`` is the signal fraction after step ``t``."""

    steps: int = 50
    offset: float = 0.008

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("diffusion steps must be >= 1")

    @functools.cached_property
    def alphas_bar(self) -> np.ndarray:
        def f(u):
            return math.cos((u + self.offset) / (1.0 + self.offset) * math.pi / 2) ** 2

        n = self.steps
        prev = np.array([f(t / n) for t in range(n)])
        nxt = np.array([f((t + 1) / n) for t in range(n)])
        betas = np.clip(1.0 - nxt / prev, 0.0, 0.999)
        return np.cumprod(1.0 - betas)

    def alpha_bar(self, t) -> float:
        """``alphas_bar[t]``, with ``t = -1`` meaning the clean signal (1.0)."""
        return 1.0 if t < 0 else float(self.alphas_bar[t])


def q_sample(x0, t, noise, sched: NoiseSchedule):
    if not 0 <= t < sched.steps:
        raise IndexError(f"diffusion step {t} outside [0, {sched.steps})")
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * np.asarray(x0) + math.sqrt(1.0 - ab) * np.asarray(noise)


def ddim_step(x_t, x0_hat, t, sched: NoiseSchedule):
    """Deterministic update x_t -> x_{t-1} given an x0 estimate."""
    ab, ab_prev = sched.alpha_bar(t), sched.alpha_bar(t - 1)
    eps = (x_t - math.sqrt(ab) * x0_hat) / math.sqrt(1.0 - ab)
    return math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps


# --- losses ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossWeights:
    lambda_mr: float = 0.3
    lambda_bce: float = 0.5
    lambda_diff: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ConfigurationError(f"{k} must be >= 0")


def _check_same(a, b, what):
    sa, sb = value(a).shape, value(b).shape
    if sa != sb:
        raise DimensionError(f"{what}: shapes {sa} and {sb} differ")


def loss_rec(x_hat, x):
    _check_same(x_hat, x, "loss_rec")
    return ops.mean(ops.square(ops.sub(x_hat, x)))


def loss_vel(x_hat, x):
    _check_same(x_hat, x, "loss_vel")
    if value(x).shape[-2] < 2:
        return tape_of(x_hat, x).const(0.0)
    d_hat = ops.sub(x_hat[..., 1:, :], x_hat[..., :-1, :])
    d = ops.sub(x[..., 1:, :], x[..., :-1, :])
    return ops.mean(ops.square(ops.sub(d_hat, d)))


def hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)


def reflect_matrix(T, pad):
    """(T + 2 pad) x T selection matrix implementing edge-excluding reflection."""
    idx = np.pad(np.arange(T), pad, mode="reflect")
    R = np.zeros((idx.size, T))
    R[np.arange(idx.size), idx] = 1.0
    return R


@functools.lru_cache(maxsize=64)
def stft_matrices(T, window_len, hop):
    """Real and imaginary STFT operators, each (frames * bins) x T, plus (frames, bins)."""
    pad = window_len // 2
    R = reflect_matrix(T, pad)
    n_frames = 1 + (T + 2 * pad - window_len) // hop
    n_bins = window_len // 2 + 1
    win = hann(window_len)
    n = np.arange(window_len)
    k = np.arange(n_bins)
    ang = -2.0 * math.pi * np.outer(k, n) / window_len
    C, S = np.cos(ang) * win, np.sin(ang) * win
    re = np.zeros((n_frames, n_bins, T))
    im = np.zeros((n_frames, n_bins, T))
    for f in range(n_frames):
        seg = R[f * hop: f * hop + window_len]
        re[f] = C @ seg
        im[f] = S @ seg
    re = re.reshape(n_frames * n_bins, T)
    im = im.reshape(n_frames * n_bins, T)
    re.setflags(write=False)
    im.setflags(write=False)
    return re, im, (n_frames, n_bins)


def stft_mag(x, window_len, hop):
    """Magnitude STFT of a 1-D sequence: Hann window, reflect padding of window_len // 2."""
    x = np.asarray(x, dtype=np.float64)
    re, im, shape = stft_matrices(x.size, window_len, hop)
    return np.hypot(re @ x, im @ x).reshape(shape)


def loss_mr_stft(x_hat, x, resolutions=DEFAULT_RESOLUTIONS):
    """Sum over resolutions of the mean L1 distance between per-channel STFT magnitudes.

    Resolutions whose window exceeds the sequence length are skipped; if
    none remain the loss is 0 and a ``RuntimeWarning`` is issued.
    """
    _check_same(x_hat, x, "loss_mr_stft")
    T = value(x).shape[-2]
    used = [(w, h) for w, h in resolutions if w <= T]
    if not used:
        warnings.warn(f"no MR-STFT resolution fits a {T}-frame sequence; loss set to 0",
                      RuntimeWarning, stacklevel=2)
        return tape_of(x_hat, x).const(0.0)
    total = None
    for w, h in used:
        re, im, _ = stft_matrices(T, w, h)
        m_hat = ops.magnitude(ops.matmul(re, x_hat), ops.matmul(im, x_hat))
        m = ops.magnitude(ops.matmul(re, x), ops.matmul(im, x))
        term = ops.mean(ops.abs(ops.sub(m_hat, m)))
        total = term if total is None else ops.add(total, term)
    return total


def total_loss(path, rec, vel, mr, bce, weights: LossWeights = LossWeights()):
    """Weighted sum of component losses; accepts floats or tape values."""
    if path not in PATH_CHANNELS:
        raise ConfigurationError(f"path must be 'head' or 'expr', got {path!r}")
    w = weights
    return w.lambda_mr * mr + w.lambda_bce * bce + w.lambda_diff * (w.lambda1 * rec + w.lambda2 * vel)


# --- conditioning ----------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionBundle:
    speech: np.ndarray
    keyframes: KeyframeSeq
    text: TranscriptTokens

    def __post_init__(self):
        s = np.asarray(self.speech, dtype=np.float64)
        k = self.keyframes if isinstance(self.keyframes, KeyframeSeq) else KeyframeSeq(self.keyframes)
        if s.ndim != 2 or s.shape[0] != len(k):
            raise DimensionError(
                f"speech features {s.shape} and {len(k)} keyframe flags disagree on T")
        object.__setattr__(self, "speech", s)
        object.__setattr__(self, "keyframes", k)

    @property
    def n_frames(self):
        return self.speech.shape[0]


class Denoiser:
    """x_t -> x0 estimate for one path."""

    def __init__(self, store, name, channels, dim, cond_dim, heads, layers, rng):
        self.channels = channels
        self.dim = dim
        self.in_proj = Linear(store, f"{name}.in_proj", channels, dim, rng)
        self.step_proj = Linear(store, f"{name}.step_proj", dim, dim, rng)
        self.speech_proj = Linear(store, f"{name}.speech_proj", cond_dim, dim, rng)
        self.flag_embed = Embedding(store, f"{name}.flag_embed", 2, dim, rng)
        self.blocks = [DecoderLayer(store, f"{name}.layer{i}", dim, heads, rng)
                       for i in range(layers)]
        self.norm = LayerNorm(store, f"{name}.norm", dim)
        self.out_proj = Linear(store, f"{name}.out_proj", dim, channels, rng)

    def __call__(self, tape, x_t, step, cond: ConditionBundle, text_embed):
        xv = value(x_t)
        if xv.shape[-1] != self.channels:
            raise DimensionError(f"denoiser expects {self.channels} channels, got {xv.shape[-1]}")
        T = xv.shape[-2]
        if T != cond.n_frames:
            raise DimensionError(f"x_t has {T} frames but the condition has {cond.n_frames}")
        pos = ops.sinusoidal_embedding(np.arange(T), self.dim)
        step_emb = self.step_proj(tape, ops.sinusoidal_embedding([step], self.dim))
        h = self.in_proj(tape, x_t) + step_emb + pos
        cond_tokens = (self.speech_proj(tape, cond.speech)
                       + self.flag_embed(tape, cond.keyframes.flags) + pos)
        parts = [cond_tokens]
        L = len(cond.text)
        if L:
            parts.append(text_embed(tape, cond.text.tokens)
                         + ops.sinusoidal_embedding(np.arange(L), self.dim))
        memory = ops.concat(parts, axis=-2) if len(parts) > 1 else cond_tokens
        for block in self.blocks:
            h = block(tape, h, memory)
        return self.out_proj(tape, self.norm(tape, h))


class DualPathMotionGenerator(TapeEstimator):
    """Head-pose and expression diffusion paths behind one estimator.

    ``fit(X, y)`` takes ``X`` as a list of ``(head_cond, expr_cond)`` pairs
    of :class:`ConditionBundle` and ``y`` as the matching
    :class:`~talkmotion.io.MotionSequence` list, and trains both paths.
    """

    def __init__(self, dim=512, layers=2, heads=8, cond_dim=512, vocab_size=256,
                 diffusion_steps=50, noise_offset=0.008, lambda_mr=0.3, lambda_bce=0.5, lambda_diff=1.0,
                 lambda1=1.0, lambda2=1.0, resolutions=DEFAULT_RESOLUTIONS, learning_rate=1e-4,
                 warmup_steps=0, weight_decay=0.01, steps=1000, random_state=0):
        self.dim = dim
        self.layers = layers
        self.heads = heads
        self.cond_dim = cond_dim
        self.vocab_size = vocab_size
        self.diffusion_steps = diffusion_steps
        self.noise_offset = noise_offset
        self.lambda_mr = lambda_mr
        self.lambda_bce = lambda_bce
        self.lambda_diff = lambda_diff
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.resolutions = resolutions
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.steps = steps
        self.random_state = random_state

    @property
    def schedule(self):
        return NoiseSchedule(self.diffusion_steps, self.noise_offset)

    @property
    def loss_weights(self):
        return LossWeights(self.lambda_mr, self.lambda_bce, self.lambda_diff, self.lambda1,
                           self.lambda2)

    def _build(self, store, rng):
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by {self.heads} heads")
        self.text_embed = Embedding(store, "gen.text_embed", self.vocab_size, self.dim, rng)
        self.paths = {
            p: Denoiser(store, f"gen.{p}", c, self.dim, self.cond_dim, self.heads, self.layers, rng)
            for p, c in PATH_CHANNELS.items()
        }
        self.stats_ = {p: (np.zeros(c), np.ones(c)) for p, c in PATH_CHANNELS.items()}
        self.loss_curves_ = {p: [] for p in PATH_CHANNELS}

    def _extra_state(self):
        return {p: {"mean": m.tolist(), "std": s.tolist()} for p, (m, s) in self.stats_.items()}

    def _load_extra_state(self, state):
        for p, d in state.items():
            self.stats_[p] = (np.array(d["mean"]), np.array(d["std"]))

    def path_parameters(self, path):
        return self.params_.subset(f"gen.{path}.") + [self.params_["gen.text_embed.table"]]

    # -- core ------------------------------------------------------------------
    def denoise(self, tape, path, x_t, step, cond):
        return self.paths[path](tape, x_t, step, cond, self.text_embed)

    def losses(self, tape, path, x_hat, x0, bce=0.0):
        """Component and total losses for one prediction (normalized space)."""
        rec = loss_rec(x_hat, x0)
        vel = loss_vel(x_hat, x0)
        mr = loss_mr_stft(x_hat, x0, self.resolutions)
        total = total_loss(path, rec, vel, mr, bce, self.loss_weights)
        return {"rec": rec, "vel": vel, "mr": mr, "total": total}

    def _normalize(self, path, x):
        m, s = self.stats_[path]
        return (np.asarray(x) - m) / s

    def _denormalize(self, path, x):
        m, s = self.stats_[path]
        return np.asarray(x) * s + m

    def fit_path(self, path, motions, conds, bce_value=0.0, steps=None):
        """Train one path; ``motions`` are T x C arrays in coefficient units."""
        if path not in PATH_CHANNELS:
            raise ConfigurationError(f"unknown path {path!r}")
        if not motions:
            raise ConfigurationError("cannot fit on an empty dataset")
        if not hasattr(self, "params_"):
            self.initialize()
        steps = self.steps if steps is None else steps
        data = np.concatenate(motions, axis=0)
        std = data.std(axis=0)
        self.stats_[path] = (data.mean(axis=0), np.where(std > 1e-6, std, 1.0))
        targets = [self._normalize(path, m) for m in motions]
        opt = AdamW(self.path_parameters(path), lr=self.learning_rate,
                    weight_decay=self.weight_decay, warmup_steps=self.warmup_steps)
        rng = np.random.default_rng([self.random_state, list(PATH_CHANNELS).index(path)])
        curve = []
        for step in range(steps):
            i = int(rng.integers(len(targets)))
            t = int(rng.integers(self.diffusion_steps))
            x0 = targets[i]
            noise = rng.standard_normal(x0.shape)
            x_t = q_sample(x0, t, noise, self.schedule)
            opt.zero_grad()
            tape = Tape()
            parts = self.losses(tape, path, self.denoise(tape, path, x_t, t, conds[i]), x0,
                                bce_value)
            tape.backward(parts["total"])
            opt.step()
            curve.append({k: float(value(v)) for k, v in parts.items()} | {"bce": float(bce_value)})
            if step % 100 == 0:
                log.debug("%s step %d total %.6f", path, step, curve[-1]["total"])
        self.loss_curves_[path] = curve
        return self

    def fit(self, X, y, bce_values=(0.0, 0.0)):
        self.initialize()
        head_c = [c[0] for c in X]
        expr_c = [c[1] for c in X]
        self.fit_path("head", [m.head_pose for m in y], head_c, bce_values[0])
        self.fit_path("expr", [m.expression for m in y], expr_c, bce_values[1])
        return self

    def reconstruction_loss(self, path, motion, cond, seed=0):
        """Mean L_rec over every diffusion step with fixed noise (normalized space)."""
        self._check_fitted()
        x0 = self._normalize(path, motion)
        noise = np.random.default_rng(seed).standard_normal(x0.shape)
        vals = []
        for t in range(self.diffusion_steps):
            x_t = q_sample(x0, t, noise, self.schedule)
            vals.append(float(loss_rec(self.denoise(Tape(), path, x_t, t, cond), x0).value))
        return float(np.mean(vals))

    def evaluate_losses(self, path, motion, cond, bce_value=0.0, seed=0):
        """Loss components averaged over every diffusion step with fixed noise."""
        self._check_fitted()
        x0 = self._normalize(path, motion)
        noise = np.random.default_rng(seed).standard_normal(x0.shape)
        acc = {"rec": 0.0, "vel": 0.0, "mr": 0.0}
        for t in range(self.diffusion_steps):
            tape = Tape()
            x_hat = self.denoise(tape, path, q_sample(x0, t, noise, self.schedule), t, cond)
            parts = self.losses(tape, path, x_hat, x0, bce_value)
            for k in acc:
                acc[k] += float(value(parts[k])) / self.diffusion_steps
        acc["bce"] = float(bce_value)
        acc["total"] = float(total_loss(path, acc["rec"], acc["vel"], acc["mr"], acc["bce"],
                                        self.loss_weights))
        return acc

    def sample_path(self, path, cond: ConditionBundle, seed=0):
        """Deterministic sampler from seeded unit noise; returns T x C coefficients."""
        self._check_fitted()
        sched = self.schedule
        x = np.random.default_rng(seed).standard_normal((cond.n_frames, PATH_CHANNELS[path]))
        for t in range(sched.steps - 1, -1, -1):
            x0_hat = self.denoise(Tape(), path, x, t, cond).value
            x = ddim_step(x, x0_hat, t, sched)
        return self._denormalize(path, x)

    def sample(self, head_cond, expr_cond, seed=0, frame_rate=25.0):
        from .io import MotionSequence

        return MotionSequence(self.sample_path("head", head_cond, seed),
                              self.sample_path("expr", expr_cond, seed + 1), frame_rate)
