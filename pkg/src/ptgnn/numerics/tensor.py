"""Dense float tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy float array. Differentiable operations
record their parent tensors and a vector-Jacobian product closure on the
output; ``Tensor.backward`` replays the reachable records in reverse
topological order, accumulating gradients into ``.grad`` buffers. The
closure environment holds whatever forward values the rule needs.

Single-threaded per training context. Separate contexts (e.g. parallel
cross-validation folds) share nothing mutable: dtype and grad-recording
settings are thread-local, and the graph lives entirely on the tensors.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from ..errors import ContractError, DimensionError

_node_ids = itertools.count()


class _Settings(threading.local):
    def __init__(self):
        self.dtype = np.float32
        self.grad_enabled = True


_settings = _Settings()


def default_dtype():
    return _settings.dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the default float dtype for this thread."""
    requested = np.dtype(dtype).type
    if requested not in (np.float32, np.float64):
        raise ContractError(f"unsupported dtype {dtype!r}; use float32 or float64")
    old = _settings.dtype
    _settings.dtype = requested
    try:
        yield
    finally:
        _settings.dtype = old


@contextmanager
def no_grad():
    """Disable graph recording; forwards run as plain array math."""
    old = _settings.grad_enabled
    _settings.grad_enabled = False
    try:
        yield
    finally:
        _settings.grad_enabled = old


class Tensor:
    """N-dimensional float array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_vjp",
                 "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.ascontiguousarray(data, dtype=dtype or default_dtype())
        if arr.dtype.type not in (np.float32, np.float64):
            raise ContractError(f"tensors hold float32/float64 data, got {arr.dtype}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self._parents = ()
        self._vjp = None
        self._backward_done = False

    @classmethod
    def _wrap(cls, data):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out.node_id = next(_node_ids)
        out._parents = ()
        out._vjp = None
        out._backward_done = False
        return out

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    # -- graph management ----------------------------------------------

    def detach(self):
        """Constant view of the same values; gradient does not flow through."""
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate ``.grad`` for every reachable tensor with requires_grad.

        Must be called on a scalar. Rejects a second call on the same loss:
        gradients would silently double-accumulate otherwise.
        """
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._backward_done:
            raise ContractError("backward already ran for this loss; rerun the forward pass first")
        self._backward_done = True
        tape = Tape.trace(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(tape.nodes):
            vjp = node._vjp
            if vjp is None or node.grad is None:
                continue
            handed_out = {id(node.grad)}
            for parent, g in zip(node._parents, vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    # adopt freshly allocated gradients; copy views/aliases
                    if (g.flags.owndata and g.flags.writeable
                            and id(g) not in handed_out
                            and g.dtype == parent.data.dtype
                            and g.shape == parent.data.shape):
                        parent.grad = g
                        handed_out.add(id(g))
                    else:
                        parent.grad = np.array(g, dtype=parent.data.dtype)
                else:
                    parent.grad += g

    # -- operator sugar --------------------------------------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


class Tape:
    """Topologically ordered record of the operations reachable from a root.

    Nodes appear parents-first, so a single reverse sweep visits each node
    exactly once and accumulates (never overwrites) parent gradients.
    """

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        self.nodes = nodes

    @staticmethod
    def trace(root: Tensor) -> "Tape":
        nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return Tape(nodes)


# -- helpers -------------------------------------------------------------


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else default_dtype()
    return Tensor._wrap(np.asarray(x, dtype=dtype))


def _from_op(data, parents, vjp):
    out = Tensor._wrap(data)
    if _settings.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise primitives ----------------------------------------------


def add(a, b):
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _from_op(out, (a, b), vjp)


def sub(a, b):
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _from_op(out, (a, b), vjp)


def mul(a, b):
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    out = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _from_op(out, (a, b), vjp)


def div(a, b):
    a = _lift(a, like=b if isinstance(b, Tensor) else None)
    b = _lift(b, like=a)
    out = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * out / b.data, b.data.shape))

    return _from_op(out, (a, b), vjp)


def neg(x):
    x = _lift(x)

    def vjp(g):
        return (-g,)

    return _from_op(-x.data, (x,), vjp)


def power(x, exponent):
    """x ** p for a plain python/numpy scalar exponent."""
    x = _lift(x)
    p = float(exponent)
    out = x.data ** p

    def vjp(g):
        return (g * p * x.data ** (p - 1.0),)

    return _from_op(out, (x,), vjp)


def exp(x):
    x = _lift(x)
    out = np.exp(x.data)

    def vjp(g):
        return (g * out,)

    return _from_op(out, (x,), vjp)


def log(x):
    x = _lift(x)
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return _from_op(out, (x,), vjp)


def sqrt(x):
    x = _lift(x)
    out = np.sqrt(x.data)

    def vjp(g):
        return (g / (2.0 * out),)

    return _from_op(out, (x,), vjp)


def sigmoid(x):
    x = _lift(x)
    # stable split form
    out = np.where(x.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(x.data))),
                   np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = out.astype(x.data.dtype)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _from_op(out, (x,), vjp)


def relu(x):
    """max(x, 0); the subgradient at exactly 0 is 0."""
    x = _lift(x)
    out = np.maximum(x.data, 0)

    def vjp(g):
        return (g * (out > 0),)

    return _from_op(out, (x,), vjp)


# -- structural primitives -------------------------------------------------


def matmul(a, b):
    a = _lift(a)
    b = _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as err:
        raise DimensionError(f"matmul batch extents incompatible: {a.shape} @ {b.shape}") from err

    def vjp(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _from_op(out, (a, b), vjp)


def reshape(x, shape):
    x = _lift(x)
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.data.shape),)

    return _from_op(out, (x,), vjp)


def transpose(x, axes=None):
    x = _lift(x)
    out = np.transpose(x.data, axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inv),)

    return _from_op(out, (x,), vjp)


def tsum(x, axis=None, keepdims=False):
    x = _lift(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=x.data.dtype)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape),)

    return _from_op(out, (x,), vjp)


def concat(xs, axis=0):
    """Concatenate tensors along an existing axis."""
    xs = [_lift(x) for x in xs]
    if not xs:
        raise DimensionError("concat of an empty sequence")
    out = np.concatenate([x.data for x in xs], axis=axis)
    sizes = [x.data.shape[axis] for x in xs]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _from_op(out, tuple(xs), vjp)


def tslice(x, key):
    """Basic (non-fancy) indexing with gradient scatter."""
    x = _lift(x)
    out = x.data[key]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out, dtype=x.data.dtype)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _from_op(out, (x,), vjp)
