"""Dense float64 tensors with reverse-mode automatic differentiation.

A :class:`Tape` records operations while it is active; :func:`backward`
replays it in reverse to populate ``grad`` on every reachable tensor that
requires gradients.  Outside an active tape all operations are plain numpy
forwards, which is the fast path used for target networks, action selection
and evaluation.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "GradError",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat",
    "div",
    "exp",
    "log",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "parameter",
    "power",
    "reshape",
    "select_index",
    "sigmoid",
    "sqrt",
    "sub",
    "sum_",
    "take_rows",
    "tanh",
]


class ShapeError(ValueError):
    """Raised when operand shapes cannot be composed."""


class GradError(RuntimeError):
    """Raised on invalid gradient requests (non-scalar root, missing grad)."""


class Tensor:
    """A dense float64 array plus an optional gradient slot."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.values) if requires_grad else None

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.values.shape}")
        return float(self.values.reshape(())[()])

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
        else:
            self.grad += g

    # operator sugar; scalars and ndarrays are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def parameter(values) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(values, requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations for one backward pass.

    Nodes are appended in execution order, so the list is already a
    topological order of the graph; a reverse sweep is a valid backward
    traversal and cycles are impossible by construction.
    """

    _active: list["Tape | None"] = []

    def __init__(self):
        self.nodes: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = Tape._active.pop()
        assert popped is self
        return False

    @staticmethod
    def current() -> "Tape | None":
        return Tape._active[-1] if Tape._active else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording even if a tape is active."""
    Tape._active.append(None)
    try:
        yield
    finally:
        Tape._active.pop()


def _record(out: Tensor, inputs: tuple[Tensor, ...], fn) -> Tensor:
    tape = Tape.current()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append((out, fn))
    return out


def backward(root: Tensor, tape: Tape) -> None:
    """Populate ``grad`` for every tensor on ``tape`` reachable from ``root``.

    ``root`` must be a scalar produced by operations recorded on ``tape``.
    Gradients accumulate, so callers zero parameter grads between passes
    (the optimizers do this on step).
    """
    if root.values.size != 1:
        raise GradError(f"backward root must be scalar, got shape {root.values.shape}")
    root._accumulate(np.ones_like(root.values))
    for out, fn in reversed(tape.nodes):
        if out.grad is not None:
            fn(out.grad)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.values.shape, b.values.shape)
    except ValueError as err:
        raise ShapeError(f"{op}: shapes {a.values.shape} and {b.values.shape} do not broadcast") from err


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor(a.values + b.values)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.values.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.values.shape))

    return _record(out, (a, b), fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = Tensor(a.values - b.values)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.values.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.values.shape))

    return _record(out, (a, b), fn)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.values)

    def fn(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _record(out, (a,), fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = Tensor(a.values * b.values)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.values, a.values.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.values, b.values.shape))

    return _record(out, (a, b), fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")
    out = Tensor(a.values / b.values)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.values, a.values.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.values / (b.values * b.values), b.values.shape))

    return _record(out, (a, b), fn)


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = Tensor(a.values**p)

    def fn(g):
        if a.requires_grad:
            a._accumulate(g * p * a.values ** (p - 1.0))

    return _record(out, (a,), fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    if av.ndim != 2 or bv.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 2-D @ 1/2-D, got {av.shape} @ {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {av.shape} @ {bv.shape}")
    out = Tensor(av @ bv)

    if bv.ndim == 2:

        def fn(g):
            if a.requires_grad:
                a._accumulate(g @ bv.T)
            if b.requires_grad:
                b._accumulate(av.T @ g)

    else:

        def fn(g):
            if a.requires_grad:
                a._accumulate(np.outer(g, bv))
            if b.requires_grad:
                b._accumulate(av.T @ g)

    return _record(out, (a, b), fn)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.values))

    def fn(g):
        if a.requires_grad:
            a._accumulate(g * out.values)

    return _record(out, (a,), fn)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.values))

    def fn(g):
        if a.requires_grad:
            a._accumulate(g / a.values)

    return _record(out, (a,), fn)


def sqrt(a: Tensor) -> Tensor:
    out = Tensor(np.sqrt(a.values))

    def fn(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / out.values)

    return _record(out, (a,), fn)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.values))

    def fn(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out.values * out.values))

    return _record(out, (a,), fn)


def sigmoid(a: Tensor) -> Tensor:
    v = a.values
    out_v = np.empty_like(v)
    pos = v >= 0
    out_v[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out_v[~pos] = ev / (1.0 + ev)
    out = Tensor(out_v)

    def fn(g):
        if a.requires_grad:
            a._accumulate(g * out.values * (1.0 - out.values))

    return _record(out, (a,), fn)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims))

    def fn(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.values.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.values.shape))

    return _record(out, (a,), fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.values.size if axis is None else a.values.shape[axis]
    out = Tensor(a.values.mean(axis=axis, keepdims=keepdims))
    inv = 1.0 / n

    def fn(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g * inv, a.values.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg * inv, a.values.shape))

    return _record(out, (a,), fn)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.values.reshape(shape))

    def fn(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.values.shape))

    return _record(out, (a,), fn)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of empty tensor list")
    ref = tensors[0].values.shape
    for t in tensors[1:]:
        s = t.values.shape
        if len(s) != len(ref) or any(i != axis and s[i] != ref[i] for i in range(len(ref))):
            raise ShapeError(f"concat mismatch along non-concat axes: {ref} vs {s}")
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis))
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _record(out, tuple(tensors), fn)


def take_rows(table: Tensor, idx) -> Tensor:
    """Row gather (embedding lookup); backward scatter-adds into the table."""
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("take_rows indices must be integers")
    if table.values.ndim != 2:
        raise ShapeError(f"take_rows table must be 2-D, got {table.values.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.values.shape[0]):
        raise ShapeError("take_rows index out of range")
    out = Tensor(table.values[idx])

    def fn(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.values)
            np.add.at(table.grad, idx, g)

    return _record(out, (table,), fn)


def select_index(a: Tensor, idx) -> Tensor:
    """Pick one element per row of a 2-D tensor: ``out[b] = a[b, idx[b]]``."""
    idx = np.asarray(idx)
    if a.values.ndim != 2 or idx.ndim != 1 or idx.shape[0] != a.values.shape[0]:
        raise ShapeError(f"select_index: shapes {a.values.shape} / {idx.shape}")
    rows = np.arange(a.values.shape[0])
    out = Tensor(a.values[rows, idx])

    def fn(g):
        if a.requires_grad:
            buf = np.zeros_like(a.values)
            buf[rows, idx] = g
            a._accumulate(buf)

    return _record(out, (a,), fn)
