"""Central finite-difference validation of tape gradients."""

from __future__ import annotations

import numpy as np

from ..exceptions import NumericError
from .tape import Tape


def _loss_value(fn):
    tape = Tape()
    out = fn(tape)
    v = float(np.asarray(out.value if hasattr(out, "value") else out).reshape(()))
    if not np.isfinite(v):
        raise NumericError(f"loss is not finite: {v}")
    return tape, out, v


def tape_gradients(fn, params):
    """Run ``fn(tape)`` forward and backward; return ``{name: grad}``."""
    for p in params:
        p.grad[...] = 0.0
    tape, out, _ = _loss_value(fn)
    tape.backward(out)
    touched = {id(leaf.param) for leaf in tape._leaves.values()}
    return {p.name: p.grad.copy() for p in params if id(p) in touched}


def grad_check(fn, params, step=1e-4, max_entries=None, seed=0):
    """Max relative error between tape and central-difference gradients.

    ``fn(tape)`` must build a scalar loss from the given parameters.
    The error per entry is ``|g_ad - g_fd| / max(1, |g_fd|)``; with
    ``max_entries`` set, that many entries per parameter are sampled.
    """
    params = list(params)
    ad = tape_gradients(fn, params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        g_ad = ad.get(p.name, np.zeros_like(p.data))
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            _, _, up = _loss_value(fn)
            flat[i] = orig - step
            _, _, down = _loss_value(fn)
            flat[i] = orig
            g_fd = (up - down) / (2 * step)
            err = abs(g_ad.reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
    return worst
