"""Differentiable primitives and the layer kernels built from them.

All functions accept :class:`Var` or plain arrays and return a ``Var``.
Arrays carry any number of leading batch axes; the last two axes are
(time, feature) wherever a kernel cares about layout.
"""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import ConfigurationError, DimensionError
from .tape import Var, lift, tape_of, value


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b):
    tape = tape_of(a, b)
    return tape, lift(a, tape), lift(b, tape)


# --- elementwise ------------------------------------------------------------


def add(a, b):
    tape, a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return tape.record(a.value + b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape, a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return tape.record(a.value - b.value, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape, a, b = _binary(a, b)
    av, bv = a.value, b.value
    return tape.record(av * bv, (a, b),
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b):
    tape, a, b = _binary(a, b)
    av, bv = a.value, b.value
    out = av / bv

    def backward(g):
        return _unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)

    return tape.record(out, (a, b), backward)


def neg(a):
    a = lift(a, tape_of(a))
    return a.tape.record(-a.value, (a,), lambda g: (-g,))


def square(a):
    a = lift(a, tape_of(a))
    av = a.value
    return a.tape.record(av * av, (a,), lambda g: (2.0 * g * av,))


def exp(a):
    a = lift(a, tape_of(a))
    out = np.exp(a.value)
    return a.tape.record(out, (a,), lambda g: (g * out,))


def log(a):
    a = lift(a, tape_of(a))
    av = a.value
    return a.tape.record(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    a = lift(a, tape_of(a))
    out = np.sqrt(a.value)
    return a.tape.record(out, (a,), lambda g: (0.5 * g / out,))


def abs(a):  # noqa: A001 - mirrors numpy naming
    a = lift(a, tape_of(a))
    av = a.value
    return a.tape.record(np.abs(av), (a,), lambda g: (g * np.sign(av),))


def sigmoid(a):
    a = lift(a, tape_of(a))
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return a.tape.record(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = lift(a, tape_of(a))
    out = np.tanh(a.value)
    return a.tape.record(out, (a,), lambda g: (g * (1.0 - out * out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """Tanh approximation of GELU."""
    a = lift(a, tape_of(a))
    x = a.value
    x2 = x * x
    th = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + th)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du),)

    return a.tape.record(out, (a,), backward)


def clip(a, lo, hi):
    a = lift(a, tape_of(a))
    av = a.value
    inside = (av >= lo) & (av <= hi)
    return a.tape.record(np.clip(av, lo, hi), (a,), lambda g: (g * inside,))


def magnitude(re, im):
    """sqrt(re^2 + im^2) with zero gradient where the magnitude vanishes."""
    tape, re, im = _binary(re, im)
    rv, iv = re.value, im.value
    out = np.hypot(rv, iv)
    safe = np.where(out > 0, out, 1.0)

    def backward(g):
        scale = np.where(out > 0, g / safe, 0.0)
        return scale * rv, scale * iv

    return tape.record(out, (re, im), backward)


# --- reductions and shape ------------------------------------------------------


def sum(a, axis=None, keepdims=False):  # noqa: A001
    a = lift(a, tape_of(a))
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape.record(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = lift(a, tape_of(a))
    if axis is None:
        n = a.value.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape):
    a = lift(a, tape_of(a))
    old = a.shape
    return a.tape.record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes):
    a = lift(a, tape_of(a))
    inv = np.argsort(axes)
    return a.tape.record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def swap_last(a):
    nd = value(a).ndim
    axes = list(range(nd))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def getitem(a, idx):
    a = lift(a, tape_of(a))
    shape = a.shape

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)

    def backward(g):
        out = np.zeros(shape)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return a.tape.record(a.value[idx], (a,), backward)


def concat(xs, axis=-1):
    tape = tape_of(*xs)
    xs = [lift(x, tape) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.value for x in xs], axis=axis)
    return tape.record(out, xs, lambda g: tuple(np.split(g, splits, axis=axis)))


def matmul(a, b):
    tape, a, b = _binary(a, b)
    av, bv = a.value, b.value

    def backward(g):
        if bv.ndim == 2 and av.ndim > 2:
            # shared weight: fold batch axes instead of materializing per-batch products
            ga = g @ bv.T
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
        if av.ndim == 2 and bv.ndim > 2:
            gb = av.T @ g
            ga = (g @ np.swapaxes(bv, -1, -2)).reshape((-1,) + av.shape).sum(axis=0)
            return ga, gb
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return tape.record(av @ bv, (a, b), backward)


def softmax_rows(x):
    """Softmax over the last axis with max subtraction."""
    x = lift(x, tape_of(x))
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return x.tape.record(out, (x,), backward)


def dropout(x, rate, rng, training):
    if not training or rate <= 0.0:
        return lift(x, tape_of(x))
    keep = (rng.random(value(x).shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


# --- layer kernels ------------------------------------------------------------------


def linear(x, W, b=None):
    """``x @ W + b`` over the last axis."""
    xs, ws = value(x).shape, value(W).shape
    if len(ws) != 2 or xs[-1] != ws[0]:
        raise DimensionError(f"linear: input shape {xs} incompatible with weight shape {ws}")
    y = matmul(x, W)
    if b is not None:
        bs = value(b).shape
        if bs != (ws[1],):
            raise DimensionError(f"linear: bias shape {bs} does not match weight shape {ws}")
        y = add(y, b)
    return y


def depthwise_dilated_conv1d(x, kernel, dilation=1):
    """Per-channel convolution along time with zero padding that keeps the length.

    ``x`` is (..., T, D), ``kernel`` is (k, D) with k odd.
    """
    tape = tape_of(x, kernel)
    x, kernel = lift(x, tape), lift(kernel, tape)
    k, D = kernel.shape
    if k % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd, got {k}")
    if x.shape[-1] != D:
        raise DimensionError(f"conv: input shape {x.shape} vs kernel shape {kernel.shape}")
    d = int(dilation)
    T = x.shape[-2]
    pad = (k - 1) * d // 2
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(x.value, widths)
    kv = kernel.value
    out = np.zeros(x.shape)
    for j in range(k):
        out += xp[..., j * d: j * d + T, :] * kv[j]

    def backward(g):
        gxp = np.zeros(xp.shape)
        gk = np.zeros(kv.shape)
        for j in range(k):
            gxp[..., j * d: j * d + T, :] += g * kv[j]
            gk[j] = (xp[..., j * d: j * d + T, :] * g).reshape(-1, D).sum(axis=0)
        return gxp[..., pad: pad + T, :], gk

    return tape.record(out, (x, kernel), backward)


def group_norm(x, groups, gain, bias, eps=1e-5):
    """Standardize each frame within channel groups, then apply a per-channel affine."""
    tape = tape_of(x, gain, bias)
    x, gain, bias = lift(x, tape), lift(gain, tape), lift(bias, tape)
    shape = x.shape
    D = shape[-1]
    if groups < 1 or D % groups:
        raise ConfigurationError(f"{D} channels are not divisible into {groups} groups")
    gshape = shape[:-1] + (groups, D // groups)
    xg = x.value.reshape(gshape)
    xc = xg - xg.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xn = (xc * inv).reshape(shape)
    gv = gain.value
    out = xn * gv + bias.value

    def backward(g):
        gxn = (g * gv).reshape(gshape)
        xng = xn.reshape(gshape)
        gx = inv * (gxn - gxn.mean(axis=-1, keepdims=True)
                    - xng * (gxn * xng).mean(axis=-1, keepdims=True))
        return (gx.reshape(shape), _unbroadcast(g * xn, gain.shape), _unbroadcast(g, bias.shape))

    return tape.record(out, (x, gain, bias), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    return group_norm(x, 1, gain, bias, eps)


def glu(x):
    D2 = value(x).shape[-1]
    if D2 % 2:
        raise DimensionError(f"glu needs an even feature count, got {D2}")
    h = D2 // 2
    return mul(x[..., :h], sigmoid(x[..., h:]))


def film(x, gamma, beta):
    """Feature-wise affine modulation ``gamma * x + beta``."""
    xs, gs, bs = value(x).shape, value(gamma).shape, value(beta).shape
    try:
        full = np.broadcast_shapes(xs, gs, bs)
    except ValueError:
        raise DimensionError(f"film: shapes {xs}, {gs}, {bs} do not broadcast") from None
    if full != xs:
        raise DimensionError(f"film: modulation {gs}/{bs} would change feature shape {xs}")
    return add(mul(gamma, x), beta)


def ffn(x, W1, b1, W2, b2):
    return linear(gelu(linear(x, W1, b1)), W2, b2)


def attention_mask_causal(n):
    """Additive mask blocking attention to later steps."""
    return np.triu(np.full((n, n), -1e9), k=1)


def multi_head_attention(queries, keys_values, heads, Wq, Wk, Wv, Wo, mask=None,
                         return_weights=False):
    """Scaled dot-product attention with ``heads`` heads of width D / heads.

    ``queries`` is (..., Tq, D), ``keys_values`` is (..., Tk, D); ``mask``
    is an additive (Tq, Tk) array.
    """
    qs, ks = value(queries).shape, value(keys_values).shape
    D = qs[-1]
    if heads < 1 or D % heads:
        raise ConfigurationError(f"model width {D} is not divisible by {heads} heads")
    if ks[-1] != D:
        raise DimensionError(f"attention: query width {D} vs key/value width {ks[-1]}")
    d = D // heads
    lead_q, lead_k = qs[:-2], ks[:-2]
    Tq, Tk = qs[-2], ks[-2]
    nl = len(lead_q)

    def split(t, lead, n):
        t = reshape(t, lead + (n, heads, d))
        return transpose(t, tuple(range(nl)) + (nl + 1, nl, nl + 2))

    Q = split(matmul(queries, Wq), lead_q, Tq)
    K = split(matmul(keys_values, Wk), lead_k, Tk)
    V = split(matmul(keys_values, Wv), lead_k, Tk)
    scores = matmul(Q, swap_last(K)) * (1.0 / math.sqrt(d))
    if mask is not None:
        scores = add(scores, mask)
    weights = softmax_rows(scores)
    o = matmul(weights, V)
    o = transpose(o, tuple(range(nl)) + (nl + 1, nl, nl + 2))
    out = matmul(reshape(o, lead_q + (Tq, D)), Wo)
    if return_weights:
        return out, weights
    return out


multi_head_cross_attention = multi_head_attention


def pooling_matrix(n_in, n_out, window_frames):
    """Row i averages input frames j with c_i - w/2 <= j < c_i + w/2.

    ``c_i = (i + 0.5) * n_in / n_out - 0.5`` maps output slots onto input
    positions. Windows hanging over either end average what is available;
    a window narrower than one frame picks the nearest frame.
    """
    if n_out < 1:
        raise ConfigurationError(f"pooled length must be >= 1, got {n_out}")
    if not window_frames > 0:
        raise ConfigurationError("pooling window must be > 0")
    P = np.zeros((n_out, n_in))
    if n_in == 0:
        return P
    half = window_frames / 2.0
    j = np.arange(n_in)
    for i in range(n_out):
        c = (i + 0.5) * n_in / n_out - 0.5
        sel = (j >= c - half - 1e-9) & (j < c + half - 1e-9)
        if not sel.any():
            sel = j == min(n_in - 1, max(0, int(math.floor(c + 0.5))))
        P[i, sel] = 1.0 / sel.sum()
    return P


def windowed_mean_pool(x, window, frame_rate, out_len):
    """Centered moving average resampled to ``out_len`` frames (window in seconds)."""
    n_in = value(x).shape[-2]
    P = pooling_matrix(n_in, out_len, window * frame_rate)
    return matmul(P, x)


def resample_frames(x, out_len):
    """Pool (or nearest-repeat) a token sequence onto ``out_len`` frames."""
    n_in = value(x).shape[-2]
    return matmul(pooling_matrix(n_in, out_len, max(1.0, n_in / out_len)), x)


def sinusoidal_embedding(positions, dim):
    """Standard sin/cos table; ``positions`` may be fractional."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(1, half))
    ang = positions * freqs[None, :]
    out = np.zeros((positions.shape[0], dim))
    out[:, 0:2 * half:2] = np.sin(ang)
    out[:, 1:2 * half:2] = np.cos(ang)
    return out
