"""A small reverse-mode gradient tape over numpy arrays.

Only the operations the regressor, kinematics and losses need are provided.
Each recorded node keeps its value, its parent links and the vector-Jacobian
product for each link; :meth:`GradientTape.backward` sweeps the nodes in
reverse creation order so that every node's adjoint is complete before it is
propagated.

Plain ndarrays may be mixed freely with :class:`Var` operands; they are
treated as constants.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError


class Var:
    __slots__ = ("value", "grad", "tape", "parents", "__weakref__")

    __array_ufunc__ = None  # ndarray <op> Var defers to the Var operator

    def __init__(self, value, tape, parents=()):
        self.value = value
        self.grad = None
        self.tape = tape
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class GradientTape:
    """Records one loss evaluation and back-propagates through it."""

    def __init__(self):
        self.nodes: list[Var] = []

    def watch(self, value) -> Var:
        """Leaf that will receive an adjoint."""
        v = Var(np.asarray(value, dtype=np.float64), self)
        self.nodes.append(v)
        return v

    def _record(self, value, parents) -> Var | np.ndarray:
        parents = tuple((p, fn) for p, fn in parents if isinstance(p, Var))
        if not parents:
            return value
        v = Var(value, self, parents)
        self.nodes.append(v)
        return v

    def backward(self, root: Var) -> None:
        if not isinstance(root, Var) or root.tape is not self:
            raise UsageError("backward root is not a node of this tape")
        if root.value.size != 1 or root.value.ndim > 1:
            raise UsageError(f"backward needs a scalar root, got shape {root.value.shape}")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            if node.grad is None or not node.parents:
                continue
            for parent, vjp in node.parents:
                g = vjp(node.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def value_list(xs):
    return [value(x) for x in xs]


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, out, ga, gb):
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(value(a)), np.shape(value(b))
    return tape._record(out, [
        (a, lambda g: _unbroadcast(ga(g), sa)),
        (b, lambda g: _unbroadcast(gb(g), sb)),
    ])


def _unary(x, out, gx):
    if not isinstance(x, Var):
        return out
    return x.tape._record(out, [(x, gx)])


def add(a, b):
    return _binary(a, b, value(a) + value(b), lambda g: g, lambda g: g)


def sub(a, b):
    return _binary(a, b, value(a) - value(b), lambda g: g, lambda g: -g)


def mul(a, b):
    va, vb = value(a), value(b)
    return _binary(a, b, va * vb, lambda g: g * vb, lambda g: g * va)


def div(a, b):
    va, vb = value(a), value(b)
    return _binary(a, b, va / vb, lambda g: g / vb, lambda g: -g * va / vb**2)


def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb
    if va.ndim == 1 or vb.ndim == 1:
        raise UsageError("matmul on the tape expects operands with ndim >= 2")
    return _binary(a, b, out,
                   lambda g: g @ np.swapaxes(vb, -1, -2),
                   lambda g: np.swapaxes(va, -1, -2) @ g)


def tanh(x):
    y = np.tanh(value(x))
    return _unary(x, y, lambda g: g * (1.0 - y**2))


def exp(x):
    y = np.exp(value(x))
    return _unary(x, y, lambda g: g * y)


def softplus(x):
    vx = value(x)
    y = np.logaddexp(0.0, vx)
    sig = 0.5 * (1.0 + np.tanh(0.5 * vx))
    return _unary(x, y, lambda g: g * sig)


def sqrt(x):
    y = np.sqrt(value(x))
    return _unary(x, y, lambda g: 0.5 * g / y)


def abs(x):  # noqa: A001 - mirrors numpy naming
    vx = value(x)
    return _unary(x, np.abs(vx), lambda g: g * np.sign(vx))


def clip(x, lo, hi):
    vx = value(x)
    inside = ((vx >= lo) & (vx <= hi)).astype(np.float64)
    return _unary(x, np.clip(vx, lo, hi), lambda g: g * inside)


def sum(x, axis=None, keepdims=False):  # noqa: A001
    vx = value(x)
    out = vx.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, vx.shape).copy()

    return _unary(x, out, grad)


def mean(x, axis=None, keepdims=False):
    vx = value(x)
    n = vx.size if axis is None else np.prod([vx.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape):
    vx = value(x)
    return _unary(x, vx.reshape(shape), lambda g: g.reshape(vx.shape))


def swapaxes(x, a1, a2):
    return _unary(x, np.swapaxes(value(x), a1, a2), lambda g: np.swapaxes(g, a1, a2))


def getitem(x, idx):
    vx = value(x)

    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (int, slice, type(Ellipsis))) or p is None for p in parts)

    def grad(g):
        out = np.zeros_like(vx)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return out

    return _unary(x, vx[idx], grad)


def concat(xs, axis=-1):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    links = []
    for i, x in enumerate(xs):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(bounds[i], bounds[i + 1])
        links.append((x, lambda g, sl=tuple(sl): g[sl]))
    return tape._record(out, links)


def stack(xs, axis=0):
    vals = [value(x) for x in xs]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    ax = axis % out.ndim
    links = [(x, lambda g, i=i: np.take(g, i, axis=ax)) for i, x in enumerate(xs)]
    return tape._record(out, links)


def cross(a, b):
    va, vb = value(a), value(b)
    out = np.cross(va, vb)
    return _binary(a, b, out, lambda g: np.cross(vb, g), lambda g: np.cross(g, va))
