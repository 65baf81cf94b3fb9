"""Finite-difference gradient cases for every differentiable kernel and loss.

Each case builds small random parameters and a closure ``fn(tape)`` that
returns a scalar; the acceptance run and the kernel tests share them.
"""

import numpy as np

from talkmotion.keypredictor import weighted_bce
from talkmotion.kernels import Parameter, ops
from talkmotion.motiongen import LossWeights, loss_mr_stft, loss_rec, loss_vel, total_loss

TOL = 1e-4


def _p(rng, name, *shape, scale=1.0):
    return Parameter(name, rng.normal(0.0, scale, shape))


def _readout(rng, shape):
    # fixed random weights make the scalar loss sensitive to every output entry
    return rng.normal(size=shape)


def case_linear(rng):
    x, W, b = _p(rng, "x", 4, 3), _p(rng, "W", 3, 2), _p(rng, "b", 2)
    r = _readout(rng, (4, 2))

    def fn(t):
        y = ops.linear(t.param(x), t.param(W), t.param(b))
        return ops.sum(ops.square(y) * r)
    return fn, [x, W, b]


def case_conv(rng):
    x, k = _p(rng, "x", 9, 3), _p(rng, "k", 5, 3)
    r = _readout(rng, (9, 3))
    return (lambda t: ops.sum(ops.depthwise_dilated_conv1d(t.param(x), t.param(k), 2) * r)
            ), [x, k]


def case_group_norm(rng):
    x, g, b = _p(rng, "x", 5, 8), _p(rng, "g", 8), _p(rng, "b", 8)
    r = _readout(rng, (5, 8))
    return (lambda t: ops.sum(ops.group_norm(t.param(x), 2, t.param(g), t.param(b)) * r)
            ), [x, g, b]


def case_glu(rng):
    x = _p(rng, "x", 4, 6)
    r = _readout(rng, (4, 3))
    return (lambda t: ops.sum(ops.glu(t.param(x)) * r)), [x]


def case_softmax(rng):
    x = _p(rng, "x", 3, 5)
    r = _readout(rng, (3, 5))
    return (lambda t: ops.sum(ops.softmax_rows(t.param(x)) * r)), [x]


def case_mhca(rng):
    D = 8
    q, kv = _p(rng, "q", 3, D), _p(rng, "kv", 5, D)
    ws = [_p(rng, n, D, D, scale=0.4) for n in ("Wq", "Wk", "Wv", "Wo")]
    r = _readout(rng, (3, D))

    def fn(t):
        out = ops.multi_head_cross_attention(t.param(q), t.param(kv), 2,
                                             *(t.param(w) for w in ws))
        return ops.sum(out * r)
    return fn, [q, kv] + ws


def case_causal_self_attention(rng):
    D = 4
    x = _p(rng, "x", 2, 4, D)
    ws = [_p(rng, n, D, D, scale=0.5) for n in ("Wq", "Wk", "Wv", "Wo")]
    r = _readout(rng, (2, 4, D))
    mask = ops.attention_mask_causal(4)

    def fn(t):
        xv = t.param(x)
        return ops.sum(ops.multi_head_attention(xv, xv, 2, *(t.param(w) for w in ws),
                                                mask=mask) * r)
    return fn, [x] + ws


def case_film(rng):
    x, g, b = _p(rng, "x", 4, 5), _p(rng, "gamma", 4, 5), _p(rng, "beta", 1, 5)
    r = _readout(rng, (4, 5))
    return (lambda t: ops.sum(ops.film(t.param(x), t.param(g), t.param(b)) * r)), [x, g, b]


def case_pooling(rng):
    x = _p(rng, "x", 10, 3)
    r = _readout(rng, (4, 3))
    return (lambda t: ops.sum(ops.square(ops.windowed_mean_pool(t.param(x), 0.1, 50.0, 4)) * r)
            ), [x]


def case_ffn(rng):
    x = _p(rng, "x", 3, 4)
    W1, b1 = _p(rng, "W1", 4, 8), _p(rng, "b1", 8)
    W2, b2 = _p(rng, "W2", 8, 4), _p(rng, "b2", 4)
    r = _readout(rng, (3, 4))
    return (lambda t: ops.sum(ops.ffn(*(t.param(p) for p in (x, W1, b1, W2, b2))) * r)
            ), [x, W1, b1, W2, b2]


def case_layer_norm(rng):
    x, g, b = _p(rng, "x", 3, 6), _p(rng, "g", 6), _p(rng, "b", 6)
    r = _readout(rng, (3, 6))
    return (lambda t: ops.sum(ops.layer_norm(t.param(x), t.param(g), t.param(b)) * r)), [x, g, b]


def case_weighted_bce(rng):
    z = _p(rng, "logits", 12)
    k = (rng.random(12) < 0.3).astype(float)
    return (lambda t: weighted_bce(ops.sigmoid(t.param(z)), k, 0.6, 2.5)), [z]


def case_rec(rng):
    xh = _p(rng, "x_hat", 6, 3)
    x = rng.normal(size=(6, 3))
    return (lambda t: loss_rec(t.param(xh), x)), [xh]


def case_vel(rng):
    xh = _p(rng, "x_hat", 6, 3)
    x = rng.normal(size=(6, 3))
    return (lambda t: loss_vel(t.param(xh), x)), [xh]


def case_mr_stft(rng):
    xh = _p(rng, "x_hat", 16, 2)
    x = rng.normal(size=(16, 2))
    return (lambda t: loss_mr_stft(t.param(xh), x, ((8, 2), (16, 4)))), [xh]


def case_total(rng):
    xh = _p(rng, "x_hat", 16, 2)
    x = rng.normal(size=(16, 2))

    def fn(t):
        v = t.param(xh)
        return total_loss("head", loss_rec(v, x), loss_vel(v, x),
                          loss_mr_stft(v, x, ((8, 2), (16, 4))), 0.7, LossWeights())
    return fn, [xh]


CASES = {
    "linear": case_linear,
    "dilated_conv": case_conv,
    "group_norm": case_group_norm,
    "glu": case_glu,
    "softmax": case_softmax,
    "mhca": case_mhca,
    "causal_self_attention": case_causal_self_attention,
    "film": case_film,
    "pooling": case_pooling,
    "ffn": case_ffn,
    "layer_norm": case_layer_norm,
    "weighted_bce": case_weighted_bce,
    "loss_rec": case_rec,
    "loss_vel": case_vel,
    "loss_mr_stft": case_mr_stft,
    "total_loss": case_total,
}


def run_case(name, seed=0):
    from talkmotion.kernels import grad_check

    fn, params = CASES[name](np.random.default_rng(seed))
    return grad_check(fn, params)
