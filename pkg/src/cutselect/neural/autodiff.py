"""Reverse-mode automatic differentiation over small dense float64 arrays.

Every :class:`Tensor` gets a creation index; ``backward`` visits reachable
nodes in decreasing creation order, which is a valid topological order and
makes gradient accumulation order canonical across runs.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id", "name")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self._id = next(_ids)
        self.name = name

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        nodes, stack, seen = [], [self], {self._id}
        while stack:
            t = stack.pop()
            nodes.append(t)
            for p in t._parents:
                if p.requires_grad and p._id not in seen:
                    seen.add(p._id)
                    stack.append(p)
        nodes.sort(key=lambda t: t._id, reverse=True)
        self.grad = np.ones_like(self.data)
        for t in nodes:
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __matmul__ = lambda a, b: matmul(a, b)
    __neg__ = lambda a: neg(a)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# --------------------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, g)
        _acc(b, g)
    return Tensor(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, g)
        _acc(b, -g)
    return Tensor(a.data - b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, (a,), lambda g: _acc(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)
    return Tensor(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _acc(a, g / b.data)
        _acc(b, -g * a.data / (b.data * b.data))
    return Tensor(a.data / b.data, (a, b), bw)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: _acc(a, g * out))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), (a,), lambda g: _acc(a, g / a.data))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), (a,), lambda g: _acc(a, g * mask))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: _acc(a, g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, (a,), lambda g: _acc(a, g * out * (1.0 - out)))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return Tensor(out, (a,), lambda g: _acc(a, g * sig))


def square(a) -> Tensor:
    return mul(a, a)


# --------------------------------------------------------------------------- shape / reduction

def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape))
    return Tensor(out, (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return sum(a, axis) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), (a,), lambda g: _acc(a, g.reshape(a.data.shape)))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.T, (a,), lambda g: _acc(a, g.T))


def concat(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, splits, axis=axis)):
            _acc(p, gp)
    return Tensor(np.concatenate([p.data for p in parts], axis=axis), parts, bw)


def index(a, key) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        _acc(a, full)
    return Tensor(a.data[key], (a,), bw)


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D and 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    da, db = a.data.ndim, b.data.ndim
    if da > 2 or db > 2:
        raise ValueError("matmul supports 1-D and 2-D operands")

    def bw(g):
        if da == 2 and db == 2:
            ga, gb = g @ b.data.T, a.data.T @ g
        elif da == 1 and db == 2:
            ga, gb = b.data @ g, np.outer(a.data, g)
        elif da == 2:
            ga, gb = np.outer(g, b.data), a.data.T @ g
        else:
            ga, gb = g * b.data, g * a.data
        _acc(a, ga)
        _acc(b, gb)
    return Tensor(a.data @ b.data, (a, b), bw)


def einsum2(spec: str, a, b) -> Tensor:
    """Two-operand einsum; every index of an operand must appear in the other or the output."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = spec.split("->")
    sa, sb = ins.split(",")

    def bw(g):
        if a.requires_grad:
            _acc(a, np.einsum(f"{out},{sb}->{sa}", g, b.data))
        if b.requires_grad:
            _acc(b, np.einsum(f"{sa},{out}->{sb}", a.data, g))
    return Tensor(np.einsum(spec, a.data, b.data), (a, b), bw)


# --------------------------------------------------------------------------- graph ops

def segment_sum(a, seg: np.ndarray, n: int) -> Tensor:
    """``out[s] = sum of rows a[e] with seg[e] == s``."""
    a = as_tensor(a)
    out = np.zeros((n,) + a.data.shape[1:])
    np.add.at(out, seg, a.data)
    return Tensor(out, (a,), lambda g: _acc(a, g[seg]))


def segment_softmax(logits, seg: np.ndarray, n: int) -> Tensor:
    """Softmax of ``logits`` rows within each segment (per trailing column)."""
    a = as_tensor(logits)
    x = a.data
    mx = np.full((n,) + x.shape[1:], -np.inf)
    np.maximum.at(mx, seg, x)
    e = np.exp(x - mx[seg])
    den = np.zeros_like(mx)
    np.add.at(den, seg, e)
    s = e / den[seg]

    def bw(g):
        dot = np.zeros_like(mx)
        np.add.at(dot, seg, g * s)
        _acc(a, s * (g - dot[seg]))
    return Tensor(s, (a,), bw)


def log_softmax(a, mask: np.ndarray | None = None) -> Tensor:
    """Log-softmax of a vector; entries with ``mask`` True get probability 0."""
    a = as_tensor(a)
    x = a.data if mask is None else np.where(mask, -np.inf, a.data)
    mx = x.max()
    z = x - mx
    lse = math.log(np.exp(z).sum())
    out = z - lse
    p = np.exp(out)

    def bw(g):
        gg = np.where(np.isfinite(out), g, 0.0)
        _acc(a, gg - p * gg.sum())
    return Tensor(out, (a,), bw)


def softmax(a) -> Tensor:
    return exp(log_softmax(a))


def no_grad(t: Tensor) -> Tensor:
    return Tensor(np.array(t.data))
