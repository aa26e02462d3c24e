"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are built by running ordinary Python code on :class:`Tensor` values.
:func:`backward` orders the graph behind a scalar loss topologically, runs
each node's backward rule once, accumulates into leaf ``.grad`` arrays and
then drops the graph.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from typing import Callable, Sequence

import numpy as np

_ids = itertools.count()
_check_finite = [False]


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def finite_checks(enabled: bool = True):
    """Raise :class:`NonFiniteError` from any op whose output is not finite."""
    prev = _check_finite[0]
    _check_finite[0] = enabled
    try:
        yield
    finally:
        _check_finite[0] = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "id", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.id = next(_ids)
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op) -> Tensor:
    if _check_finite[0] and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite output from {op}")
    need = any(p.requires_grad for p in parents)
    return Tensor(data, need, parents if need else (), backward if need else None, op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_shape(op: str, *shapes) -> tuple:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"{op}: shapes {' and '.join(str(s) for s in shapes)} do not broadcast") from None


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a.shape, b.shape)
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def relu(a) -> Tensor:
    a = as_tensor(a)
    m = a.data > 0
    return _node(np.where(m, a.data, 0.0), (a,), lambda g: (g * m,), "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _node(y, (a,), bw, "gelu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,), "exp")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (a,), bw, "softmax")


# -- linear algebra and reductions ----------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, (a, b), bw, "matmul")


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(reduce_sum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def slice_(a, key) -> Tensor:
    """Basic or integer-array indexing; the backward pass scatters with accumulation."""
    a = as_tensor(a)
    out = a.data[key]

    def bw(g):
        full = np.zeros(a.shape)
        np.add.at(full, key, g)
        return (full,)

    return _node(np.array(out, dtype=np.float64), (a,), bw, "slice")


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather along one axis (permutations, cyclic shifts, duplicates)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    ax = axis % a.ndim
    out = np.take(a.data, idx, axis=ax)

    def bw(g):
        full = np.zeros(a.shape)
        gm = np.moveaxis(g, list(range(ax, ax + idx.ndim)), list(range(idx.ndim)))
        fm = np.moveaxis(full, ax, 0)
        np.add.at(fm, idx, gm)
        return (full,)

    return _node(out, (a,), bw, "take")


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: nothing to concatenate")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[p.shape for p in parts]} disagree off axis {axis}") from None
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _node(out, tuple(parts), bw, "concat")


# -- backward -------------------------------------------------------------

class Tape:
    """Nodes behind one loss in topological order (parents before children)."""

    def __init__(self, loss: Tensor):
        order, seen = [], set()
        stack = [(loss, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.id in seen:
                continue
            seen.add(node.id)
            stack.append((node, True))
            for p in node._parents:
                if p.id not in seen and p.requires_grad:
                    stack.append((p, False))
        self.nodes = order

    def __len__(self):
        return len(self.nodes)

    def free(self) -> None:
        for n in self.nodes:
            n._parents = ()
            n._backward = None
        self.nodes = []


def backward(loss: Tensor, retain_graph: bool = False) -> Tape:
    """Populate ``.grad`` on every leaf that requires it; returns the (freed) tape."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape(loss)
    grads = {loss.id: np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if not p.requires_grad:
                continue
            gp = np.asarray(gp, dtype=np.float64).reshape(p.shape)
            grads[p.id] = gp if p.id not in grads else grads[p.id] + gp
    if not retain_graph:
        tape.free()
    return tape


def grad_check(f: Callable, x, eps: float = 1e-6) -> float:
    """Central-difference check of the gradient of scalar ``f`` at ``x``.

    ``x`` is one array or a list of arrays (passed to ``f`` as separate
    tensors). Returns ``max|g_ad - g_fd| / max(max|g_fd|, 1e-8)`` over all
    inputs.
    """
    xs = [np.array(v, dtype=np.float64) for v in (x if isinstance(x, (list, tuple)) else [x])]
    ts = [Tensor(v.copy(), requires_grad=True) for v in xs]
    out = f(*ts)
    backward(out)
    g_ad = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]
    g_fd = []
    for k, v in enumerate(xs):
        g = np.zeros_like(v)
        flat = v.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            vals = []
            for s in (eps, -eps):
                flat[i] = orig + s
                args = [Tensor(xs[j].copy()) for j in range(len(xs))]
                vals.append(float(f(*args).data))
            flat[i] = orig
            g.reshape(-1)[i] = (vals[0] - vals[1]) / (2 * eps)
        g_fd.append(g)
    num = max((float(np.max(np.abs(a - b))) if a.size else 0.0) for a, b in zip(g_ad, g_fd))
    den = max(max((float(np.max(np.abs(b))) if b.size else 0.0) for b in g_fd), 1e-8)
    return num / den
