"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Var wraps an ndarray together with the closures needed to push gradients
back to its parents. Enough ops are provided for dense networks, softmax
heads, soft-argmax expectations, and the cross-product orientation loss;
nothing more. Gradients accumulate into .grad after calling backward() on a
scalar Var.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the parent's shape."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    # -- graph plumbing -------------------------------------------------

    def backward(self):
        if self.value.ndim != 0 and self.value.size != 1:
            raise ValueError("backward() requires a scalar Var")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._vjp is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                parent.grad = parent.grad + g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_var(other)
        out = Var(
            self.value + other.value,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
        )
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = as_var(other)
        return Var(
            self.value - other.value,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)),
        )

    def __rsub__(self, other):
        return as_var(other).__sub__(self)

    def __mul__(self, other):
        other = as_var(other)
        return Var(
            self.value * other.value,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.value, self.shape),
                _unbroadcast(g * self.value, other.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)
        return Var(
            self.value / other.value,
            (self, other),
            lambda g: (
                _unbroadcast(g / other.value, self.shape),
                _unbroadcast(-g * self.value / other.value**2, other.shape),
            ),
        )

    def __rtruediv__(self, other):
        return as_var(other).__truediv__(self)

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        return Var(
            self.value**exponent,
            (self,),
            lambda g: (g * exponent * self.value ** (exponent - 1),),
        )

    def __matmul__(self, other):
        other = as_var(other)
        return Var(
            self.value @ other.value,
            (self, other),
            lambda g: (g @ other.value.T, self.value.T @ g),
        )

    def __getitem__(self, key):
        def vjp(g):
            out = np.zeros_like(self.value)
            np.add.at(out, key, g)
            return (out,)

        return Var(self.value[key], (self,), vjp)

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        old = self.shape
        return Var(
            self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),)
        )

    def sum(self, axis=None, keepdims=False):
        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, self.shape).copy(),)

        return Var(self.value.sum(axis=axis, keepdims=keepdims), (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        total = self.sum(axis=axis, keepdims=keepdims)
        count = self.value.size if axis is None else self.value.shape[axis]
        return total * (1.0 / count)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


# -- elementwise functions ---------------------------------------------------


def exp(x: Var) -> Var:
    x = as_var(x)
    out_val = np.exp(x.value)
    return Var(out_val, (x,), lambda g: (g * out_val,))


def log(x: Var) -> Var:
    x = as_var(x)
    return Var(np.log(x.value), (x,), lambda g: (g / x.value,))


def sqrt(x: Var) -> Var:
    x = as_var(x)
    out_val = np.sqrt(x.value)
    return Var(out_val, (x,), lambda g: (g * 0.5 / out_val,))


def tanh(x: Var) -> Var:
    x = as_var(x)
    out_val = np.tanh(x.value)
    return Var(out_val, (x,), lambda g: (g * (1.0 - out_val**2),))


def relu(x: Var) -> Var:
    x = as_var(x)
    mask = (x.value > 0).astype(float)
    return Var(x.value * mask, (x,), lambda g: (g * mask,))


def softmax(x: Var, axis: int = -1) -> Var:
    """Numerically stable softmax along `axis`."""
    x = as_var(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - inner),)

    return Var(p, (x,), vjp)


def logsumexp(x: Var, axis: int = -1) -> Var:
    x = as_var(x)
    m = x.value.max(axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out_val = np.squeeze(m + np.log(s), axis=axis)
    p = e / s

    def vjp(g):
        return (np.expand_dims(g, axis) * p,)

    return Var(out_val, (x,), vjp)


def square(x: Var) -> Var:
    return as_var(x) ** 2
