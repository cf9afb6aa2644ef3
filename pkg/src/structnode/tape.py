"""Reverse-mode automatic differentiation on a dynamically built tape.

Values are float64 numpy arrays; scalars are 0-d arrays. Every operation
accepts plain arrays or Node operands: expressions with no Node involved
(or run under no_grad) evaluate straight through numpy, so the same model
code serves both training and plain numerical evaluation.
"""

from __future__ import annotations

import contextlib

import numpy as np


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable taping: operations on Nodes return plain arrays."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """One recorded value. Leaf nodes (no parents) act as parameters.

    grad is None until a backward pass reaches the node (semantically zero).
    parents/vjp describe how to push an output adjoint to the operands.
    """

    __slots__ = ("value", "grad", "parents", "vjp", "name")

    # keep numpy from consuming Nodes elementwise; defer to our operators
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag})"

    def zero_grad(self):
        self.grad = None

    # arithmetic sugar; all route through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, exponent):
        return powc(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)


def value_of(x):
    """Underlying ndarray of a Node, or the input coerced to float64."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tracing(*xs):
    return _grad_enabled and any(isinstance(x, Node) for x in xs)


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    if not _tracing(a, b):
        return out

    def vjp(g):
        return _unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)

    return Node(out, (a, b), vjp)


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    if not _tracing(a, b):
        return out

    def vjp(g):
        return _unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)

    return Node(out, (a, b), vjp)


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    if not _tracing(a, b):
        return out

    def vjp(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return Node(out, (a, b), vjp)


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    if not _tracing(a, b):
        return out

    def vjp(g):
        return (_unbroadcast(g / bv, av.shape),
                _unbroadcast(-g * av / (bv * bv), bv.shape))

    return Node(out, (a, b), vjp)


def neg(a):
    av = value_of(a)
    if not _tracing(a):
        return -av
    return Node(-av, (a,), lambda g: (-g,))


def powc(a, exponent):
    """a ** exponent for a constant (non-Node) exponent."""
    if isinstance(exponent, Node):
        raise TypeError("exponent must be a constant")
    av = value_of(a)
    out = av ** exponent
    if not _tracing(a):
        return out

    def vjp(g):
        return (g * exponent * av ** (exponent - 1),)

    return Node(out, (a,), vjp)


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if not _tracing(a, b):
        return out

    def vjp(g):
        if av.ndim == 1 and bv.ndim == 2:
            ga, gb = g @ bv.T, np.outer(av, g)
        elif av.ndim == 2 and bv.ndim == 1:
            ga, gb = np.outer(g, bv), av.T @ g
        elif av.ndim == 1 and bv.ndim == 1:
            ga, gb = g * bv, g * av
        else:
            ga = g @ np.swapaxes(bv, -1, -2)
            gb = np.swapaxes(av, -1, -2) @ g
            ga = _unbroadcast(ga, av.shape)
            gb = _unbroadcast(gb, bv.shape)
        return ga, gb

    return Node(out, (a, b), vjp)


def exp(a):
    av = value_of(a)
    out = np.exp(av)
    if not _tracing(a):
        return out
    return Node(out, (a,), lambda g: (g * out,))


def tanh(a):
    av = value_of(a)
    out = np.tanh(av)
    if not _tracing(a):
        return out
    return Node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    av = value_of(a)
    out = 1.0 / (1.0 + np.exp(-av))
    if not _tracing(a):
        return out
    return Node(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a):
    """x * sigmoid(x)."""
    av = value_of(a)
    sig = 1.0 / (1.0 + np.exp(-av))
    out = av * sig
    if not _tracing(a):
        return out

    def vjp(g):
        return (g * sig * (1.0 + av * (1.0 - sig)),)

    return Node(out, (a,), vjp)


def silu_prime(a):
    """Derivative of silu, as a differentiable expression."""
    s = sigmoid(a)
    return s * (1.0 + a * (1.0 - s))


def asum(a, axis=None):
    av = value_of(a)
    out = av.sum(axis=axis)
    if not _tracing(a):
        return out

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return Node(out, (a,), vjp)


def amean(a, axis=None):
    av = value_of(a)
    n = av.size if axis is None else av.shape[axis]
    return asum(a, axis=axis) * (1.0 / n)


def take(a, idx):
    """Basic slicing/indexing."""
    av = value_of(a)
    out = av[idx]
    if not _tracing(a):
        return out

    def vjp(g):
        full = np.zeros_like(av)
        full[idx] = g
        return (full,)

    return Node(out, (a,), vjp)


def reshape(a, shape):
    av = value_of(a)
    out = av.reshape(shape)
    if not _tracing(a):
        return out
    return Node(out, (a,), lambda g: (g.reshape(av.shape),))


def transpose(a):
    """Swap the last two axes."""
    av = value_of(a)
    out = np.swapaxes(av, -1, -2)
    if not _tracing(a):
        return out
    return Node(out, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(parts, axis=-1):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if not _tracing(*parts):
        return out
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Node(out, tuple(parts), vjp)


def stack(parts, axis=0):
    vals = [value_of(p) for p in parts]
    out = np.stack(vals, axis=axis)
    if not _tracing(*parts):
        return out

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Node(out, tuple(parts), vjp)


def block_embed(params, basis):
    """Linear embedding of a flat parameter vector into a matrix.

    basis has shape (m, r, c); the result is sum_k params[k] * basis[k].
    """
    basis = np.asarray(basis, dtype=np.float64)
    pv = value_of(params)
    out = np.tensordot(pv, basis, axes=([0], [0]))
    if not _tracing(params):
        return out

    def vjp(g):
        return (np.tensordot(basis, g, axes=([1, 2], [0, 1])),)

    return Node(out, (params,), vjp)


def backward(root):
    """Reverse accumulation from a scalar root.

    Adjoints land on each reachable node's .grad; leaves keep theirs until
    zeroed. Raises ValueError for a non-scalar root.
    """
    if not isinstance(root, Node):
        raise ValueError("backward expects a Node root")
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")

    order = _toposort(root)
    root.grad = np.ones_like(root.value)
    for node in order:
        g = node.grad
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if not isinstance(parent, Node):
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += pg


def _toposort(root):
    """Nodes in reverse topological order (root first), iteratively."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if isinstance(parent, Node) and id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def zero_grads(params):
    for p in params:
        p.zero_grad()
