"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Operations on tensors that track
gradients record a closure on the output node; :meth:`Tensor.backward`
walks the resulting graph in reverse topological order and accumulates
gradients into leaf tensors. The graph is released after the pass unless
``retain_graph=True``.

Broadcasting follows numpy rules; gradients flowing into a broadcast
operand are summed back to its shape.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, DomainError, NumericError

_DTYPE = np.float32
_GRAD_ENABLED = True


def get_dtype():
    return _DTYPE


def set_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default storage dtype (``float64`` for checks)."""
    prev = _DTYPE
    set_dtype(dtype)
    try:
        yield
    finally:
        set_dtype(prev)


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make ndarray <op> Tensor dispatch to the Tensor's reflected operator
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.name = name

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple, backward: Callable) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_nonscalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    # -- autodiff -------------------------------------------------------------
    def backward(self, grad=None, retain_graph: bool = False) -> None:
        backward(self, grad=grad, retain_graph=retain_graph)


def _raise_nonscalar(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op} produced non-finite values")


def _broadcast_shapes(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- binary elementwise -------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, "add")
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._node(out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, "sub")
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._node(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, "mul")
    out = a.data * b.data

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    out = a.data / b.data
    _check_finite(out, "div")

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), bw)


# -- unary elementwise --------------------------------------------------------
def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._node(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    _check_finite(out, "exp")
    return Tensor._node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    out = np.log(a.data)
    return Tensor._node(out, (a,), lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, 0).astype(a.data.dtype, copy=False)
    return Tensor._node(out, (a,), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = as_tensor(a)
    out = a.data * a.data
    return Tensor._node(out, (a,), lambda g: (2 * g * a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)

    def bw(g):
        if np.any(out == 0):
            raise NumericError("sqrt gradient undefined at 0")
        return (g / (2 * out),)

    return Tensor._node(out, (a,), bw)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(p, Tensor):
        raise TypeError("power only supports a constant exponent")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data ** p
    _check_finite(out, "pow")
    return Tensor._node(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "log": log,
    "relu": relu,
    "square": square,
    "sqrt": sqrt,
}


def elementwise(op: str, *inputs) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


# -- linear algebra -----------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), bw)


# -- reductions ---------------------------------------------------------------
def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(sorted(out))


def _expand_grad(g: np.ndarray, shape: tuple, axes, keepdims: bool) -> np.ndarray:
    if axes is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = np.asarray(a.data.sum(axis=axes, keepdims=keepdims))
    return Tensor._node(out, (a,), lambda g: (_expand_grad(g, a.shape, axes, keepdims),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = a.size if axes is None else int(np.prod([a.shape[i] for i in axes]))
    if n == 0:
        raise DimensionError("mean over an empty axis")
    out = np.asarray(a.data.mean(axis=axes, keepdims=keepdims))
    return Tensor._node(out, (a,), lambda g: (_expand_grad(g, a.shape, axes, keepdims) / n,))


def logsumexp(a, axis=-1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    m = a.data.max(axis=axes, keepdims=True)
    m = np.where(np.isfinite(m), m, 0)
    e = np.exp(a.data - m)
    s = e.sum(axis=axes, keepdims=True)
    out = np.log(s) + m
    soft = e / s
    if not keepdims:
        out = np.squeeze(out, axis=axes)

    def bw(g):
        return (_expand_grad(g, a.shape, axes, keepdims) * soft,)

    return Tensor._node(out, (a,), bw)


def reduce(op: str, x, axis=None, keepdims: bool = False) -> Tensor:
    if op == "sum":
        return sum_(x, axis, keepdims)
    if op == "mean":
        return mean(x, axis, keepdims)
    raise ValueError(f"unknown reduction {op!r}")


# -- shape manipulation -------------------------------------------------------
def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from None
    return Tensor._node(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return Tensor._node(out, (a,), lambda g: (np.transpose(g, inv),))


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, np.integer)) or p is None or p is Ellipsis for p in parts)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)
    out = a.data[idx]
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return Tensor._node(np.asarray(out), (a,), bw)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return Tensor._node(out, tuple(ts), bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return Tensor._node(out, tuple(ts), bw)


# -- backward pass ------------------------------------------------------------
def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, grad=None, retain_graph: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf.

    Leaf gradients accumulate across calls until :meth:`Tensor.zero_grad`;
    the graph itself is released unless ``retain_graph`` is set, so a second
    call on the same loss only accumulates again when the graph was retained.
    """
    if loss.size != 1 and grad is None:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    seed = np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=loss.data.dtype)
    grads = {id(loss): seed}
    order = _topo_order(loss)
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node._parents == ():
                g = np.array(g, dtype=node.data.dtype, copy=True)
                node.grad = g if node.grad is None else node.grad + g
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            prev = grads.get(key)
            grads[key] = pg if prev is None else prev + pg
        if not retain_graph:
            node._parents = ()
            node._backward = None
            node.requires_grad = False


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
