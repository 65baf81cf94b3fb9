"""Dual-path speech encoder.

Frozen frontend features pass through a trainable adapter and a
multi-scale dilated convolution (MSDC) block to give ``h_s``. The
head-pose path pools ``h_s`` with a long and a mid-sized window, refines
both token streams with cross-attention back onto ``h_s`` and fuses them
into ``f_h``. The expression path modulates ``h_s`` with prosody through
FiLM, pools with a short window and refines the result into ``f_e``.
Both outputs are resampled to the motion frame count ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import TapeEstimator
from .exceptions import ConfigurationError, DataError, DimensionError
from .frontend import FrontendConfig, fixed_projection, frontend_features
from .io import AudioClip
from .kernels import Tape, ops
from .kernels.layers import Attention, FeedForward, Linear
from .prosody import ProsodySeq, extract_prosody


@dataclass(frozen=True)
class DpseConfig:
    dim: int = 512
    msdc_branches: int = 3
    dilations: tuple = (1, 2, 4)
    kernel_size: int = 5
    groups: int = 8
    dropout: float = 0.1
    window_coarse: float = 1.0
    window_fine: float = 0.25
    window_expr: float = 0.1
    heads: int = 8
    fused_dim: int = 512
    feature_rate: float = 50.0
    n_mels: int = 80
    proj_seed: int = 0
    use_prosody: bool = True


class MSDCBlock:
    """Parallel dilated depthwise branches fused by a pointwise projection plus residual."""

    def __init__(self, store, name, dim, dilations, kernel_size, groups, rng):
        if kernel_size % 2 == 0:
            raise ConfigurationError(f"kernel size must be odd, got {kernel_size}")
        if dim % groups:
            raise ConfigurationError(f"dim {dim} not divisible by {groups} groups")
        self.groups = groups
        self.branches = []
        scale = 1.0 / math.sqrt(kernel_size)
        for i, d in enumerate(dilations):
            pre = f"{name}.branch{i}"
            self.branches.append(dict(
                dilation=int(d),
                kernel=store.add(f"{pre}.dw_kernel", rng.uniform(-scale, scale, (kernel_size, dim))),
                gn_gain=store.add(f"{pre}.gn_gain", np.ones(dim)),
                gn_bias=store.add(f"{pre}.gn_bias", np.zeros(dim)),
                widen=Linear(store, f"{pre}.widen", dim, 2 * dim, rng),
                pointwise=Linear(store, f"{pre}.pointwise", dim, dim, rng),
            ))
        self.fuse = Linear(store, f"{name}.fuse", len(dilations) * dim, dim, rng)

    def __call__(self, tape, x, dropout=0.0, rng=None, training=False):
        outs = []
        for b in self.branches:
            y = ops.depthwise_dilated_conv1d(x, tape.param(b["kernel"]), b["dilation"])
            y = ops.group_norm(y, self.groups, tape.param(b["gn_gain"]), tape.param(b["gn_bias"]))
            y = ops.glu(b["widen"](tape, y))
            outs.append(b["pointwise"](tape, y))
        fused = self.fuse(tape, ops.concat(outs, axis=-1))
        return x + ops.dropout(fused, dropout, rng, training)


class RefineBlock:
    """tokens + MHCA(tokens, context), followed by a residual feed-forward."""

    def __init__(self, store, name, dim, heads, rng):
        self.attn = Attention(store, f"{name}.attn", dim, heads, rng)
        self.ff = FeedForward(store, f"{name}.ff", dim, rng)

    def __call__(self, tape, tokens, context):
        o = tokens + self.attn(tape, tokens, context)
        return o + self.ff(tape, o)


def pooled_lengths(T):
    """(coarse, fine, expression) token counts for a clip of ``T`` motion frames."""
    if T < 1:
        raise ConfigurationError(f"target length must be >= 1, got {T}")
    return math.ceil(T / 4), math.ceil(T / 2), T


class DualPathSpeechEncoder(TapeEstimator):
    """Speech -> (f_h, f_e), each ``T x fused_dim``.

    ``fit`` only initializes weights from ``random_state``; the encoder is
    trained through whatever loss is built on top of :meth:`forward`.
    """

    def __init__(self, dim=512, msdc_branches=3, dilations=(1, 2, 4), kernel_size=5, groups=8,
                 dropout=0.1, window_coarse=1.0, window_fine=0.25, window_expr=0.1, heads=8,
                 fused_dim=512, feature_rate=50.0, n_mels=80, proj_seed=0, use_prosody=True,
                 random_state=0):
        self.dim = dim
        self.msdc_branches = msdc_branches
        self.dilations = dilations
        self.kernel_size = kernel_size
        self.groups = groups
        self.dropout = dropout
        self.window_coarse = window_coarse
        self.window_fine = window_fine
        self.window_expr = window_expr
        self.heads = heads
        self.fused_dim = fused_dim
        self.feature_rate = feature_rate
        self.n_mels = n_mels
        self.proj_seed = proj_seed
        self.use_prosody = use_prosody
        self.random_state = random_state

    @classmethod
    def from_config(cls, cfg: DpseConfig, random_state=0):
        return cls(**vars(cfg), random_state=random_state)

    def _validate(self):
        if len(self.dilations) != self.msdc_branches:
            raise ConfigurationError(
                f"{self.msdc_branches} MSDC branches need as many dilations, got {self.dilations}")
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.dim % self.groups:
            raise ConfigurationError(f"dim {self.dim} not divisible by {self.groups} groups")
        for w in (self.window_coarse, self.window_fine, self.window_expr):
            if not w > 0:
                raise ConfigurationError("pooling windows must be > 0")

    def _build(self, store, rng):
        self._validate()
        D = self.dim
        self.adapter = Linear(store, "dpse.adapter", D, D, rng)
        self.msdc = MSDCBlock(store, "dpse.msdc", D, self.dilations, self.kernel_size,
                              self.groups, rng)
        self.coarse_proj = Linear(store, "dpse.head.coarse_proj", D, D, rng)
        self.fine_proj = Linear(store, "dpse.head.fine_proj", D, D, rng)
        self.coarse_refine = RefineBlock(store, "dpse.head.coarse_refine", D, self.heads, rng)
        self.fine_refine = RefineBlock(store, "dpse.head.fine_refine", D, self.heads, rng)
        self.head_fuse = Linear(store, "dpse.head.fuse", 2 * D, self.fused_dim, rng)
        self.film_gamma = Linear(store, "dpse.expr.film_gamma", 2, D, rng)
        self.film_beta = Linear(store, "dpse.expr.film_beta", 2, D, rng)
        store["dpse.expr.film_gamma.weight"].data *= 0.1
        store["dpse.expr.film_beta.weight"].data *= 0.1
        store["dpse.expr.film_gamma.bias"].data[...] = 1.0
        self.expr_proj = Linear(store, "dpse.expr.proj", D, D, rng)
        self.expr_refine = RefineBlock(store, "dpse.expr.refine", D, self.heads, rng)
        self.expr_out = (Linear(store, "dpse.expr.out", D, self.fused_dim, rng)
                         if self.fused_dim != D else None)

    def fit(self, X=None, y=None):
        return self.initialize()

    def _frontend_config(self):
        return FrontendConfig(n_mels=self.n_mels, proj_seed=self.proj_seed, out_dim=self.dim)

    # -- stages ------------------------------------------------------------
    def frozen_features(self, clip: AudioClip) -> np.ndarray:
        cfg = self._frontend_config()
        feats = frontend_features(clip, cfg)
        if feats.shape[0] == 0:
            raise DataError("audio clip is shorter than one analysis frame")
        return fixed_projection(feats, cfg.proj_seed, cfg.out_dim)

    def speech_hidden(self, tape, frozen, training=False, rng=None):
        x = self.adapter(tape, frozen)
        return self.msdc(tape, x, self.dropout, rng, training)

    def head_pose_branch(self, tape, h_s, T):
        n_c, n_f, _ = pooled_lengths(T)
        rate = self.feature_rate
        coarse = self.coarse_proj(tape, ops.windowed_mean_pool(h_s, self.window_coarse, rate, n_c))
        fine = self.fine_proj(tape, ops.windowed_mean_pool(h_s, self.window_fine, rate, n_f))
        coarse = self.coarse_refine(tape, coarse, h_s)
        fine = self.fine_refine(tape, fine, h_s)
        both = ops.concat([ops.resample_frames(coarse, T), ops.resample_frames(fine, T)], axis=-1)
        return self.head_fuse(tape, both)

    def modulate(self, tape, h_s, prosody_norm):
        """FiLM: gamma(prosody) * h_s + beta(prosody), per frame."""
        p = np.asarray(prosody_norm, dtype=np.float64)
        if p.shape != (h_s.shape[-2], 2):
            raise DimensionError(
                f"prosody shape {p.shape} does not match {h_s.shape[-2]} speech frames")
        return ops.film(h_s, self.film_gamma(tape, p), self.film_beta(tape, p))

    def expression_branch(self, tape, h_s, prosody_norm, T):
        h_mod = self.modulate(tape, h_s, prosody_norm) if self.use_prosody else h_s
        _, _, n_e = pooled_lengths(T)
        pooled = ops.windowed_mean_pool(h_mod, self.window_expr, self.feature_rate, n_e)
        c_e = self.expr_proj(tape, pooled)
        f_e = self.expr_refine(tape, c_e, h_mod)
        return self.expr_out(tape, f_e) if self.expr_out is not None else f_e

    def forward(self, tape, clip: AudioClip, T, prosody: ProsodySeq | None = None,
                training=False, rng=None):
        """Build ``(f_h, f_e)`` on ``tape``."""
        self._check_fitted()
        frozen = self.frozen_features(clip)
        if prosody is None:
            prosody = extract_prosody(clip)
        h_s = self.speech_hidden(tape, frozen, training, rng)
        return (self.head_pose_branch(tape, h_s, T),
                self.expression_branch(tape, h_s, prosody.normalized, T))

    def encode(self, clip: AudioClip, T, prosody: ProsodySeq | None = None):
        """Eval-mode features as numpy arrays ``(f_h, f_e)``."""
        f_h, f_e = self.forward(Tape(), clip, T, prosody)
        return f_h.value.copy(), f_e.value.copy()

    def transform(self, X, n_frames):
        if isinstance(X, AudioClip):
            return self.encode(X, n_frames)
        return [self.encode(a, n) for a, n in zip(X, n_frames)]
