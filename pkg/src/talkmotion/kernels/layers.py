"""Parameter-owning building blocks shared by the encoder, predictor and generator."""

from __future__ import annotations

import math

import numpy as np

from . import ops


def glorot(rng, din, dout):
    a = math.sqrt(6.0 / (din + dout))
    return rng.uniform(-a, a, size=(din, dout))


class Linear:
    def __init__(self, store, name, din, dout, rng, bias=True, zero=False):
        w = np.zeros((din, dout)) if zero else glorot(rng, din, dout)
        self.weight = store.add(f"{name}.weight", w)
        self.bias = store.add(f"{name}.bias", np.zeros(dout)) if bias else None

    def __call__(self, tape, x):
        b = tape.param(self.bias) if self.bias is not None else None
        return ops.linear(x, tape.param(self.weight), b)


class LayerNorm:
    def __init__(self, store, name, dim):
        self.gain = store.add(f"{name}.gain", np.ones(dim))
        self.bias = store.add(f"{name}.bias", np.zeros(dim))

    def __call__(self, tape, x):
        return ops.layer_norm(x, tape.param(self.gain), tape.param(self.bias))


class Attention:
    """Multi-head attention with bias-free projections."""

    def __init__(self, store, name, dim, heads, rng, zero_out=False):
        self.heads = heads
        self.wq = store.add(f"{name}.wq", glorot(rng, dim, dim))
        self.wk = store.add(f"{name}.wk", glorot(rng, dim, dim))
        self.wv = store.add(f"{name}.wv", glorot(rng, dim, dim))
        self.wo = store.add(f"{name}.wo", np.zeros((dim, dim)) if zero_out else glorot(rng, dim, dim))

    def __call__(self, tape, queries, keys_values, mask=None):
        return ops.multi_head_attention(
            queries, keys_values, self.heads,
            tape.param(self.wq), tape.param(self.wk), tape.param(self.wv), tape.param(self.wo),
            mask=mask,
        )


class FeedForward:
    def __init__(self, store, name, dim, rng, mult=4, zero_out=False):
        self.inner = Linear(store, f"{name}.inner", dim, mult * dim, rng)
        self.outer = Linear(store, f"{name}.outer", mult * dim, dim, rng, zero=zero_out)

    def __call__(self, tape, x):
        return ops.ffn(x, tape.param(self.inner.weight), tape.param(self.inner.bias),
                       tape.param(self.outer.weight), tape.param(self.outer.bias))


class Embedding:
    def __init__(self, store, name, n, dim, rng, scale=0.1):
        self.table = store.add(f"{name}.table", rng.normal(0.0, scale, size=(n, dim)))

    def __call__(self, tape, ids):
        return ops.getitem(tape.param(self.table), np.asarray(ids, dtype=np.int64))


class DecoderLayer:
    """Pre-norm block: self-attention, optional cross-attention, feed-forward."""

    def __init__(self, store, name, dim, heads, rng, cross=True):
        self.norm_self = LayerNorm(store, f"{name}.norm_self", dim)
        self.self_attn = Attention(store, f"{name}.self_attn", dim, heads, rng)
        self.cross = cross
        if cross:
            self.norm_cross = LayerNorm(store, f"{name}.norm_cross", dim)
            self.cross_attn = Attention(store, f"{name}.cross_attn", dim, heads, rng)
        self.norm_ff = LayerNorm(store, f"{name}.norm_ff", dim)
        self.ff = FeedForward(store, f"{name}.ff", dim, rng)

    def __call__(self, tape, x, memory=None, self_mask=None):
        h = self.norm_self(tape, x)
        x = x + self.self_attn(tape, h, h, self_mask)
        if self.cross and memory is not None and memory.shape[-2] > 0:
            x = x + self.cross_attn(tape, self.norm_cross(tape, x), memory)
        return x + self.ff(tape, self.norm_ff(tape, x))
