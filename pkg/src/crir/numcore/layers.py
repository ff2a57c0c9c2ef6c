"""Network building blocks: linear layers, embeddings and Dice activation."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, matmul, mul, parameter, power, sigmoid, sub, sum_, take_rows

__all__ = ["Dice", "Embedding", "Linear", "dice", "uniform_init"]

DICE_EPS = 1e-8


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.bias = parameter(uniform_init(rng, (out_dim,), in_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def buffers(self) -> list[np.ndarray]:
        return []


class Embedding:
    """Learnable lookup table; rows drawn uniform in [-1/sqrt(dim), +1/sqrt(dim)]."""

    def __init__(self, count: int, dim: int, rng: np.random.Generator):
        self.table = parameter(uniform_init(rng, (count, dim), dim))

    def __call__(self, ids) -> Tensor:
        return take_rows(self.table, ids)

    def parameters(self) -> list[Tensor]:
        return [self.table]

    def buffers(self) -> list[np.ndarray]:
        return []


def dice(x: Tensor, alpha, batch_mean, batch_var, eps: float = DICE_EPS) -> Tensor:
    """Data-adaptive activation: ``p*x + (1-p)*alpha*x`` with
    ``p = logistic((x - mean) / sqrt(var + eps))``.

    ``batch_mean``/``batch_var`` may be Tensors (differentiable batch
    statistics) or plain arrays (frozen running statistics).
    """
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    m = batch_mean if isinstance(batch_mean, Tensor) else Tensor(batch_mean)
    v = batch_var if isinstance(batch_var, Tensor) else Tensor(batch_var)
    inv_std = power(add(v, Tensor(eps)), -0.5)
    p = sigmoid(mul(sub(x, m), inv_std))
    # p*x + (1-p)*alpha*x == x * (alpha + p*(1 - alpha))
    gate = add(alpha, mul(p, sub(Tensor(1.0), alpha)))
    return mul(x, gate)


class Dice:
    """Dice activation layer with per-channel learnable ``alpha``.

    Uses current mini-batch statistics while training (masked rows excluded)
    and momentum-0.99 running averages when evaluating or when fewer than two
    valid rows are present.
    """

    def __init__(self, channels: int, alpha_init: float = 0.25, momentum: float = 0.99):
        self.alpha = parameter(np.full(channels, alpha_init))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum

    def __call__(self, x: Tensor, train: bool = False, mask: np.ndarray | None = None) -> Tensor:
        rows = x.values.shape[0]
        count = rows if mask is None else float(mask.sum())
        if train and count >= 2:
            if mask is None:
                s1 = sum_(x, axis=0)
                s2 = sum_(mul(x, x), axis=0)
            else:
                xm = mul(x, Tensor(mask))
                s1 = sum_(xm, axis=0)
                s2 = sum_(mul(xm, x), axis=0)
            inv = 1.0 / count
            m = mul(s1, Tensor(inv))
            var = sub(mul(s2, Tensor(inv)), mul(m, m))
            mom = self.momentum
            self.running_mean *= mom
            self.running_mean += (1.0 - mom) * m.values
            self.running_var *= mom
            self.running_var += (1.0 - mom) * var.values
            return dice(x, self.alpha, m, var)
        return dice(x, self.alpha, self.running_mean, self.running_var)

    def parameters(self) -> list[Tensor]:
        return [self.alpha]

    def buffers(self) -> list[np.ndarray]:
        return [self.running_mean, self.running_var]
