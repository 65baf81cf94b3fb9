"""Autoregressive keyframe predictor.

A causal transformer decoder reads speech features plus the previous
keyframe flag at every step, cross-attends to transcript token embeddings
and emits ``p_t = P(frame t is a keyframe)``. Training uses teacher
forcing and a class-weighted binary cross-entropy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import ClassifierMixin
from sklearn.metrics import f1_score

from .base import TapeEstimator
from .exceptions import ConfigurationError, DimensionError
from .io import KeyframeSeq, TranscriptTokens
from .kernels import AdamW, Tape, ops
from .kernels.layers import DecoderLayer, Embedding, LayerNorm, Linear

log = logging.getLogger(__name__)

PROB_EPS = 1e-7
BOS = 2  # flag id fed at t = 0


@dataclass(frozen=True)
class KeyPredictorConfig:
    layers: int = 6
    heads: int = 8
    dim: int = 512
    vocab_size: int = 256
    max_len: int = 4096
    w0: float | None = None
    w1: float | None = None

    def __post_init__(self):
        _check_weights(self.w0, self.w1)


def _check_weights(w0, w1):
    if (w0 is None) != (w1 is None):
        raise ConfigurationError("w0 and w1 must be given together")
    if w0 is not None and not w1 > w0 > 0:
        raise ConfigurationError(f"class weights need w1 > w0 > 0, got w0={w0}, w1={w1}")


def class_weights(targets):
    """Inverse-frequency weights ``(w0, w1)``, each clamped to [0.1, 10]."""
    k = np.asarray(targets.flags if isinstance(targets, KeyframeSeq) else targets).reshape(-1)
    T = k.size
    pos = int(k.sum())
    neg = T - pos
    w1 = T / (2.0 * max(1, pos))
    w0 = T / (2.0 * max(1, neg))
    return float(np.clip(w0, 0.1, 10.0)), float(np.clip(w1, 0.1, 10.0))


def weighted_bce(probs, targets, w0, w1, weights=None):
    """``-sum_t (w1 k_t log p_t + w0 (1 - k_t) log(1 - p_t))`` with p clamped to [1e-7, 1-1e-7].

    ``weights`` optionally masks frames (1 = counted), e.g. padding.
    """
    k = np.asarray(targets.flags if isinstance(targets, KeyframeSeq) else targets, dtype=np.float64)
    pv = probs.value if hasattr(probs, "value") else np.asarray(probs)
    if pv.shape != k.shape:
        raise DimensionError(f"probabilities {pv.shape} and targets {k.shape} differ")
    p = ops.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    a = w1 * k
    b = w0 * (1.0 - k)
    if weights is not None:
        a, b = a * weights, b * weights
    return ops.neg(ops.sum(ops.add(ops.mul(ops.log(p), a), ops.mul(ops.log(ops.sub(1.0, p)), b))))


def keyframe_f1(pred, target) -> float:
    """F1 of the positive class; 1.0 when both sequences have no keyframes."""
    pred = np.asarray(pred).reshape(-1)
    target = np.asarray(target).reshape(-1)
    return float(f1_score(target, pred, zero_division=1.0))


def _pad_batch(features, flags, tokens):
    B = len(features)
    T = max(f.shape[0] for f in features)
    L = max(len(t) for t in tokens)
    F = features[0].shape[1]
    x = np.zeros((B, T, F))
    prev = np.full((B, T), BOS, dtype=np.int64)
    frame_mask = np.zeros((B, T))
    tok = np.zeros((B, L), dtype=np.int64)
    key_mask = np.zeros((B, 1, 1, L))
    has_text = np.zeros((B, 1, 1))
    for i, (f, k, t) in enumerate(zip(features, flags, tokens)):
        n = f.shape[0]
        x[i, :n] = f
        prev[i, 1:n] = np.asarray(k)[: n - 1]
        frame_mask[i, :n] = 1.0
        tok[i, : len(t)] = t
        key_mask[i, ..., len(t):] = -1e9
        has_text[i] = 1.0 if len(t) else 0.0
    return x, prev, frame_mask, tok, key_mask, has_text


class KeyframePredictor(ClassifierMixin, TapeEstimator):
    """Transformer decoder over frames; ``fit`` trains with teacher forcing.

    ``X`` for ``fit``/``predict`` is a list of ``(features, TranscriptTokens)``
    pairs where ``features`` is ``T x feature_dim``; ``y`` is a list of
    keyframe sequences.
    """

    def __init__(self, layers=6, heads=8, dim=512, feature_dim=None, vocab_size=256,
                 max_len=4096, w0=None, w1=None, learning_rate=1e-4, warmup_steps=0,
                 weight_decay=0.01, steps=1000, batch_size=32, threshold=0.5, random_state=0):
        self.layers = layers
        self.heads = heads
        self.dim = dim
        self.feature_dim = feature_dim
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.w0 = w0
        self.w1 = w1
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.steps = steps
        self.batch_size = batch_size
        self.threshold = threshold
        self.random_state = random_state

    def _build(self, store, rng):
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by {self.heads} heads")
        _check_weights(self.w0, self.w1)
        fd = self.feature_dim or self.dim
        self.in_proj = Linear(store, "keypred.in_proj", fd, self.dim, rng)
        self.flag_embed = Embedding(store, "keypred.flag_embed", 3, self.dim, rng)
        self.text_embed = Embedding(store, "keypred.text_embed", self.vocab_size, self.dim, rng)
        self.blocks = [DecoderLayer(store, f"keypred.layer{i}", self.dim, self.heads, rng)
                       for i in range(self.layers)]
        self.norm = LayerNorm(store, "keypred.norm", self.dim)
        self.head = Linear(store, "keypred.head", self.dim, 1, rng)
        self.weights_ = (1.0, 1.0) if self.w0 is None else (self.w0, self.w1)

    def _extra_state(self):
        return {"class_weights": list(self.weights_)}

    def _load_extra_state(self, state):
        if "class_weights" in state:
            self.weights_ = tuple(state["class_weights"])

    # -- forward -------------------------------------------------------------
    def logits(self, tape, features, prev_flags, tokens, key_mask=None, has_text=None):
        """Per-frame logits ``(B, T)`` from batched inputs."""
        T = features.shape[-2]
        if T > self.max_len:
            raise ConfigurationError(f"sequence of {T} frames exceeds max_len={self.max_len}")
        pos = ops.sinusoidal_embedding(np.arange(T), self.dim)
        x = self.in_proj(tape, features) + self.flag_embed(tape, prev_flags) + pos
        memory = None
        if tokens.shape[-1] > 0:
            memory = self.text_embed(tape, tokens) + ops.sinusoidal_embedding(
                np.arange(tokens.shape[-1]), self.dim)
        causal = ops.attention_mask_causal(T)
        for block in self.blocks:
            x = self._block(tape, block, x, memory, causal, key_mask, has_text)
        out = self.head(tape, self.norm(tape, x))
        return ops.reshape(out, out.shape[:-1])

    @staticmethod
    def _block(tape, block, x, memory, causal, key_mask, has_text):
        h = block.norm_self(tape, x)
        x = x + block.self_attn(tape, h, h, causal)
        if memory is not None:
            mask = None if key_mask is None else key_mask + np.zeros((1, 1, x.shape[-2], 1))
            c = block.cross_attn(tape, block.norm_cross(tape, x), memory, mask)
            x = x + (c if has_text is None else c * has_text)
        return x + block.ff(tape, block.norm_ff(tape, x))

    def _as_lists(self, X):
        feats, toks = [], []
        for f, t in X:
            f = np.asarray(f, dtype=np.float64)
            fd = self.feature_dim or self.dim
            if f.ndim != 2 or f.shape[1] != fd:
                raise DimensionError(f"features must be T x {fd}, got {f.shape}")
            feats.append(f)
            toks.append(np.asarray(t.tokens if isinstance(t, TranscriptTokens) else t,
                                   dtype=np.int64))
        return feats, toks

    def _batch_loss(self, tape, feats, flags, toks):
        x, prev, fmask, tok, kmask, has_text = _pad_batch(feats, flags, toks)
        targets = np.zeros_like(fmask)
        for i, k in enumerate(flags):
            targets[i, : len(k)] = k
        probs = ops.sigmoid(self.logits(tape, x, prev, tok, kmask, has_text))
        w0, w1 = self.weights_
        return weighted_bce(probs, targets, w0, w1, weights=fmask) * (1.0 / len(feats))

    def fit(self, X, y):
        feats, toks = self._as_lists(X)
        flags = [np.asarray(k.flags if isinstance(k, KeyframeSeq) else k, dtype=np.int64)
                 for k in y]
        if not feats:
            raise ConfigurationError("cannot fit on an empty dataset")
        if len(flags) != len(feats):
            raise DimensionError("X and y differ in length")
        self.initialize()
        if self.w0 is None or self.w1 is None:
            self.weights_ = class_weights(np.concatenate(flags))
        opt = AdamW(self.params_, lr=self.learning_rate, weight_decay=self.weight_decay,
                    warmup_steps=self.warmup_steps)
        rng = np.random.default_rng(self.random_state)
        n = len(feats)
        bs = min(self.batch_size, n)
        self.loss_curve_ = []
        order = rng.permutation(n)
        cursor = 0
        for step in range(self.steps):
            if cursor + bs > n:
                order, cursor = rng.permutation(n), 0
            idx = order[cursor: cursor + bs]
            cursor += bs
            opt.zero_grad()
            tape = Tape()
            loss = self._batch_loss(tape, [feats[i] for i in idx], [flags[i] for i in idx],
                                    [toks[i] for i in idx])
            tape.backward(loss)
            opt.step()
            self.loss_curve_.append(float(loss.value))
            if step % 100 == 0:
                log.debug("keypredictor step %d loss %.6f", step, self.loss_curve_[-1])
        return self

    def loss(self, X, y) -> float:
        """Mean weighted BCE of teacher-forced predictions (no parameter update)."""
        self._check_fitted()
        feats, toks = self._as_lists(X)
        flags = [np.asarray(k.flags if isinstance(k, KeyframeSeq) else k) for k in y]
        return float(self._batch_loss(Tape(), feats, flags, toks).value)

    def predict_proba_teacher_forced(self, features, tokens, targets) -> np.ndarray:
        self._check_fitted()
        feats, toks = self._as_lists([(features, tokens)])
        k = np.asarray(targets.flags if isinstance(targets, KeyframeSeq) else targets)
        if feats[0].shape[0] == 0:
            return np.zeros(0)
        x, prev, _, tok, kmask, has_text = _pad_batch(feats, [k], toks)
        logits = self.logits(Tape(), x, prev, tok, kmask, has_text).value[0]
        return np.clip(1.0 / (1.0 + np.exp(-logits)), PROB_EPS, 1.0 - PROB_EPS)

    def predict_proba_free_running(self, features, tokens):
        """Roll out step by step, feeding back ``p_t > threshold``; returns ``(probs, flags)``."""
        self._check_fitted()
        feats, toks = self._as_lists([(features, tokens)])
        f, t = feats[0], toks[0]
        T = f.shape[0]
        probs = np.zeros(T)
        flags = np.zeros(T, dtype=np.int8)
        for s in range(T):
            x, prev, _, tok, kmask, has_text = _pad_batch([f[: s + 1]], [flags[: s + 1]], [t])
            logit = self.logits(Tape(), x, prev, tok, kmask, has_text).value[0, s]
            probs[s] = np.clip(1.0 / (1.0 + np.exp(-logit)), PROB_EPS, 1.0 - PROB_EPS)
            flags[s] = probs[s] > self.threshold
        return probs, KeyframeSeq(flags)

    def predict_proba(self, X):
        return [self.predict_proba_free_running(f, t)[0] for f, t in X]

    def predict(self, X):
        return [self.predict_proba_free_running(f, t)[1] for f, t in X]

    def teacher_forced_f1(self, X, y) -> float:
        preds, trues = [], []
        for (f, t), k in zip(X, y):
            p = self.predict_proba_teacher_forced(f, t, k)
            preds.append((p > self.threshold).astype(int))
            trues.append(np.asarray(k.flags if isinstance(k, KeyframeSeq) else k))
        return keyframe_f1(np.concatenate(preds), np.concatenate(trues))
