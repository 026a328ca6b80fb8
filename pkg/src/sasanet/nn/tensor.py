"""Dense float tensors with a reverse-mode autodiff tape.

Everything is backed by numpy arrays. An op records itself on the implicit
tape (the parent links of its output tensor) only while grad mode is on and
at least one operand requires gradients, so inference code pays nothing for
autodiff. Gradients use float64 by default; float32 is available through
``set_default_dtype`` for timing parity runs.
"""
from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class GraphError(RuntimeError):
    """Invalid use of the autodiff tape (non-scalar loss, double backward)."""


_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_done")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._op = ""
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """A view of the same data with no tape history."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out._op = "detach"
        out._done = False
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    # arithmetic sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._done = False
    out._op = op
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if track:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of an operand that was broadcast."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/dp into ``p.grad`` for every reachable parameter.

    Visits each recorded op exactly once in reverse topological order.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._done:
        raise GraphError("backward already ran on this graph; rebuild the loss before calling again")
    if not loss.requires_grad:
        raise GraphError("loss does not require grad; nothing to differentiate")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        if node._done:
            raise GraphError("graph was already consumed by a previous backward pass")
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
            node._done = True
        # free intermediate gradient buffers, keep leaf grads
        if node._parents:
            node.grad = None
    loss._done = True


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} not broadcastable")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} not broadcastable")

    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} not broadcastable")

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bw, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    data = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), bw, "matmul")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bw(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), bw, "reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        _accum(a, np.transpose(g, inv))

    return _make(data, (a,), bw, "transpose")


def concat(parts: Sequence, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: empty input list")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _make(data, tuple(parts), bw, "concat")


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = as_tensor(a)
    if start < 0 or start + length > a.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}) out of range for axis {axis} of {a.shape}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _make(data, (a,), bw, "narrow")


def cumsum(a, axis: int) -> Tensor:
    a = as_tensor(a)
    data = np.cumsum(a.data, axis=axis)

    def bw(g):
        rev = [slice(None)] * g.ndim
        rev[axis] = slice(None, None, -1)
        rev = tuple(rev)
        _accum(a, np.cumsum(g[rev], axis=axis)[rev])

    return _make(data, (a,), bw, "cumsum")


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(np.asarray(data), (a,), bw, "sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    data = np.where(a.data >= 0, a.data, slope * a.data)

    def bw(g):
        _accum(a, g * np.where(a.data >= 0, 1.0, slope))

    return _make(data, (a,), bw, "leaky_relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), bw, "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + exp(x)), stable for large |x|."""
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = np.empty_like(x)
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)

    def bw(g):
        _accum(a, g * sig)

    return _make(data, (a,), bw, "softplus")


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        _accum(a, g * data)

    return _make(data, (a,), bw, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    data = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)

    return _make(data, (a,), bw, "log")


def softmax(a, axis: int = -1) -> Tensor:
    """Row-stable softmax; -inf entries get exactly zero probability."""
    a = as_tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # fully-masked row guard
    e = np.exp(x - m)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accum(a, data * (g - dot))

    return _make(data, (a,), bw, "softmax")


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True; no gradient flows to them."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    try:
        data = np.where(mask, value, a.data)
    except ValueError:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} not broadcastable to {a.shape}")

    def bw(g):
        _accum(a, _unbroadcast(np.where(mask, 0.0, g), a.data.shape))

    return _make(data, (a,), bw, "masked_fill")


def embedding_lookup(table, idx: np.ndarray) -> Tensor:
    """Gather rows of a (vocab, dim) table by an integer index array."""
    table = as_tensor(table)
    idx = np.asarray(idx)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("embedding_lookup: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"embedding_lookup: index out of range for table with {table.data.shape[0]} rows")
    data = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _accum(table, gt)

    return _make(data, (table,), bw, "embedding_lookup")


def gather_rows(a, idx: np.ndarray) -> Tensor:
    """Select rows along axis 0."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    data = a.data[idx]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        _accum(a, ga)

    return _make(data, (a,), bw, "gather_rows")


def scatter_add_rows(base, idx: np.ndarray, rows) -> Tensor:
    """base with ``rows`` added at positions ``idx`` along axis 0."""
    base, rows = as_tensor(base), as_tensor(rows)
    idx = np.asarray(idx)
    if rows.data.shape[0] != idx.shape[0]:
        raise ShapeError(f"scatter_add_rows: {idx.shape[0]} indices vs {rows.data.shape[0]} rows")
    data = base.data.copy()
    np.add.at(data, idx, rows.data)

    def bw(g):
        _accum(base, g)
        _accum(rows, g[idx])

    return _make(data, (base, rows), bw, "scatter_add_rows")


def take_along(a, idx: np.ndarray, axis: int) -> Tensor:
    """np.take_along_axis with scatter-add backward."""
    a = as_tensor(a)
    idx = np.asarray(idx)
    data = np.take_along_axis(a.data, idx, axis=axis)
    bidx = np.broadcast_to(idx, data.shape)

    def bw(g):
        ga = np.zeros_like(a.data)
        grids = list(np.ogrid[tuple(slice(n) for n in g.shape)])
        grids[axis] = bidx
        np.add.at(ga, tuple(grids), g)
        _accum(a, ga)

    return _make(data, (a,), bw, "take_along")
