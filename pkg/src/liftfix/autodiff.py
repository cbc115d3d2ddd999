"""Minimal reverse-mode automatic differentiation over numpy arrays.

Define-by-run: every operation builds a Var node holding its float64 value
and a closure that routes the incoming gradient to its parents. backward()
walks the graph once in reverse topological order. Only the handful of
operations the losses in this package need are provided; all of them are
checked against central finite differences in the test suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple["Var", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # operator sugar; scalars and arrays are wrapped as constants

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

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def var(value, requires_grad: bool = True) -> Var:
    """A leaf node; gradients accumulate here when requires_grad."""
    return Var(value, requires_grad=requires_grad)


def const(value) -> Var:
    return Var(value)


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def stop_gradient(v: Var) -> Var:
    """Detach: same value, no gradient flow."""
    return Var(v.value)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a: Var, b: Var, value: np.ndarray, da, db) -> Var:
    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(da(g), a.value.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(db(g), b.value.shape))

    return Var(value, parents=(a, b), backward=backward)


def add(a: Var, b: Var) -> Var:
    return _binary(a, b, a.value + b.value, lambda g: g, lambda g: g)


def sub(a: Var, b: Var) -> Var:
    return _binary(a, b, a.value - b.value, lambda g: g, lambda g: -g)


def mul(a: Var, b: Var) -> Var:
    return _binary(a, b, a.value * b.value, lambda g: g * b.value, lambda g: g * a.value)


def div(a: Var, b: Var) -> Var:
    return _binary(
        a,
        b,
        a.value / b.value,
        lambda g: g / b.value,
        lambda g: -g * a.value / (b.value * b.value),
    )


def _unary(a: Var, value: np.ndarray, da) -> Var:
    def backward(g: np.ndarray) -> None:
        a._accumulate(da(g))

    return Var(value, parents=(a,), backward=backward)


def log(a: Var) -> Var:
    return _unary(a, np.log(a.value), lambda g: g / a.value)


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return _unary(a, out, lambda g: g * out)


def sigmoid(a: Var) -> Var:
    out = np.empty_like(a.value)
    pos = a.value >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ez = np.exp(a.value[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def clip(a: Var, lo: float, hi: float) -> Var:
    """Clamp values; gradient passes only through the unclamped interior."""
    inside = (a.value > lo) & (a.value < hi)
    return _unary(a, np.clip(a.value, lo, hi), lambda g: g * inside)


def vsum(a: Var, axis=None, keepdims: bool = False) -> Var:
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def da(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        g_expanded = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g_expanded, a.value.shape).copy()

    return _unary(a, value, da)


def vmean(a: Var, axis=None, keepdims: bool = False) -> Var:
    n = a.value.size if axis is None else a.value.shape[axis]
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def softmax(a: Var, axis: int = -1) -> Var:
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def da(g: np.ndarray) -> np.ndarray:
        inner = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - inner)

    return _unary(a, out, da)


def matmul(a: Var, b: Var) -> Var:
    value = a.value @ b.value

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            if b.value.ndim == 1:
                ga = np.outer(g, b.value) if a.value.ndim == 2 else g * b.value
            else:
                ga = np.atleast_1d(g) @ b.value.T
            a._accumulate(ga.reshape(a.value.shape))
        if b.requires_grad or b._parents:
            if a.value.ndim == 1:
                gb = np.outer(a.value, g) if b.value.ndim == 2 else g * a.value
            else:
                gb = a.value.T @ np.atleast_1d(g)
            b._accumulate(gb.reshape(b.value.shape))

    return Var(value, parents=(a, b), backward=backward)


def reshape(a: Var, shape) -> Var:
    return _unary(a, a.value.reshape(shape), lambda g: g.reshape(a.value.shape))


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    parts = list(parts)
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for p, start, stop in zip(parts, offsets, offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, stop)
            p._accumulate(g[tuple(sl)])

    return Var(value, parents=tuple(parts), backward=backward)


def gather(a: Var, idx: np.ndarray) -> Var:
    """Fancy indexing along axis 0; duplicate indices accumulate on backward."""
    idx = np.asarray(idx)

    def da(g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return _unary(a, a.value[idx], da)


def scatter_combine(values: Var, index: np.ndarray, size: int) -> Var:
    """Place values into a zero vector of the given size.

    With distinct indices this is a plain scatter. When several values land
    on one slot they combine by noisy-or, 1 - prod(1 - v); injective object
    bindings keep the package on the distinct path, the combine branch is a
    safety net.
    """
    index = np.asarray(index)
    if len(np.unique(index)) == len(index):
        out = np.zeros(size, dtype=np.float64)
        out[index] = values.value

        def da(g: np.ndarray) -> np.ndarray:
            return g[index]

        return _unary(values, out, da)

    groups: dict[int, list[int]] = {}
    for k, i in enumerate(index):
        groups.setdefault(int(i), []).append(k)
    out = np.zeros(size, dtype=np.float64)
    for i, ks in groups.items():
        out[i] = 1.0 - np.prod(1.0 - values.value[ks])

    def da(g: np.ndarray) -> np.ndarray:
        gv = np.zeros_like(values.value)
        for i, ks in groups.items():
            for k in ks:
                rest = [j for j in ks if j != k]
                gv[k] = g[i] * np.prod(1.0 - values.value[rest])
        return gv

    return _unary(values, out, da)


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every requires_grad leaf."""
    if root.value.ndim != 0:
        raise ValueError("backward needs a scalar root")
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and (p.requires_grad or p._parents):
                stack.append((p, False))
    root._accumulate(np.ones_like(root.value))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
