"""Adam optimizer over explicit parameter lists."""

from __future__ import annotations

import numpy as np

from .tensor import GradError, Tensor

__all__ = ["Adam"]


class Adam:
    """Standard Adam with bias correction.

    Holds per-parameter first/second moment arrays; ``step`` applies the
    update and zeroes the consumed gradients.
    """

    def __init__(self, params, learning_rate: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params: list[Tensor] = list(params)
        for p in self.params:
            if not p.requires_grad:
                raise GradError("Adam given a tensor that does not require grad")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.values) for p in self.params]
        self.second_moment = [np.zeros_like(p.values) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise GradError("parameter has no gradient")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        lr = self.learning_rate
        for p, m, v in zip(self.params, self.first_moment, self.second_moment):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.values -= lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)
            g[...] = 0.0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
