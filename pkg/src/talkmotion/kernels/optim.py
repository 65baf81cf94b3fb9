"""AdamW with linear warmup."""

from __future__ import annotations

import numpy as np


class AdamW:
    """Decoupled weight decay Adam; decay applies to matrices only, not biases."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01,
                 warmup_steps=0):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self):
        if self.warmup_steps <= 0:
            return self.lr
        return self.lr * min(1.0, (self.t + 1) / self.warmup_steps)

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def step(self):
        lr = self.current_lr()
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.weight_decay and p.data.ndim >= 2:
                p.data *= 1.0 - lr * self.weight_decay
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
