"""Central-difference gradient oracle.

Independent of the tape: the forward function is re-evaluated at perturbed
points without any gradient machinery, so agreement with the recorded
backward pass is evidence both are right.
"""

from __future__ import annotations

import numpy as np

from .tensor import GradError, Tape, Tensor, backward

__all__ = ["finite_diff_check"]


def finite_diff_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between the autodiff gradient of ``f`` at ``x`` and
    central finite differences with step ``h``.

    ``f`` must be deterministic and return a scalar Tensor.  Relative error
    per coordinate is ``|g_auto - g_fd| / max(1, |g_fd|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x.requires_grad = True
    x.zero_grad()
    if x.grad is None:
        x.grad = np.zeros_like(x.values)
    with Tape() as tape:
        y = f(x)
    if y.values.size != 1:
        raise GradError("finite_diff_check needs a scalar objective")
    backward(y, tape)
    g_auto = x.grad.copy()
    x.grad[...] = 0.0

    flat = x.values.reshape(-1)
    g_fd = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        y_plus = f(x).item()
        flat[i] = orig - h
        y_minus = f(x).item()
        flat[i] = orig
        if not (np.isfinite(y_plus) and np.isfinite(y_minus)):
            raise GradError("objective is non-finite at a perturbed point")
        g_fd[i] = (y_plus - y_minus) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(g_fd))
    return float(np.max(np.abs(g_auto.reshape(-1) - g_fd) / denom))
