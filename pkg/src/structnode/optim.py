"""Adam with bias correction over leaf Nodes."""

from __future__ import annotations

import numpy as np

from .errors import TrainingError


class Adam:
    """Holds first/second moment accumulators per parameter and a step count.

    step() reads each parameter's accumulated .grad and updates .value in
    place; missing grads count as zero.
    """

    def __init__(self, params, lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise TrainingError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                name = p.name or f"param[{i}]"
                raise TrainingError(f"non-finite gradient for {name}")
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def decay_lr(self, factor):
        self.lr *= factor
