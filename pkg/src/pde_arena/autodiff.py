"""Minimal reverse-mode automatic differentiation on numpy arrays.

A :class:`Var` records its parents together with a vector-Jacobian product
for each.  Only the handful of operations the PINN losses need are
provided; numpy broadcasting is supported and undone in the backward pass.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "parents", "grad")
    __array_ufunc__ = None      # make ndarray binary ops defer to Var

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents          # tuple of (Var, vjp)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.shape})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return _binary(self, other, np.add, lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _binary(other, self, np.subtract, lambda g, a, b: g, lambda g, a, b: -g)

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide, lambda g, a, b: g / b,
                       lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        return _binary(other, self, np.divide, lambda g, a, b: g / b,
                       lambda g, a, b: -g * a / (b * b))

    def __neg__(self):
        return Var(-self.value, ((self, lambda g: -g),))

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("only constant exponents are supported")
        v = self.value
        return Var(v ** k, ((self, lambda g: g * k * v ** (k - 1)),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        v = self.value

        def vjp(g):
            out = np.zeros_like(v)
            np.add.at(out, idx, g)
            return out

        return Var(v[idx], ((self, vjp),))

    @property
    def T(self):
        return Var(self.value.T, ((self, lambda g: g.T),))

    def sum(self, axis=None):
        return vsum(self, axis)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return vsum(self, axis) * (1.0 / n)


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, op, da, db):
    av, bv = _value(a), _value(b)
    out = op(av, bv)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(da(g, av, bv), av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(db(g, av, bv), bv.shape)))
    return Var(out, tuple(parents))


def matmul(a, b):
    """``a @ b`` with ``b`` 2-D; ``a`` may carry leading batch axes."""
    av, bv = _value(a), _value(b)
    if bv.ndim != 2:
        raise ValueError("right operand of matmul must be 2-D")
    out = av @ bv
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ bv.T))
    if isinstance(b, Var):
        k = bv.shape[0]
        parents.append((b, lambda g: av.reshape(-1, k).T @ g.reshape(-1, bv.shape[1])))
    return Var(out, tuple(parents))


def vsum(x, axis=None):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    v = x.value

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, v.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), v.shape).copy()

    return Var(v.sum(axis=axis), ((x, vjp),))


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    y = np.tanh(x.value)
    return Var(y, ((x, lambda g: g * (1.0 - y * y)),))


def mean(x, axis=None):
    return x.mean(axis) if isinstance(x, Var) else np.mean(x, axis=axis)


def value_of(x):
    return _value(x)


def backward(out: Var):
    """Accumulate d(out)/d(node) into ``node.grad`` for every ancestor."""
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
