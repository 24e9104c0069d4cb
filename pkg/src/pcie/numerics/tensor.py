"""Dense float64 tensors with a dynamic reverse-mode differentiation graph.

Every differentiable op returns a new :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to one gradient per parent.
The graph is rebuilt on each forward pass and released by :func:`backward`,
so a second backward over the same graph raises :class:`GraphError`.
"""

from __future__ import annotations

import contextlib
import math
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import GraphError, ShapeError

DTYPE = np.float64

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread (inference only)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "is_leaf", "op", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=DTYPE)
        # ascontiguousarray would promote 0-d arrays to 1-d
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        if not np.all(np.isfinite(self.data)) and requires_grad:
            raise ValueError("parameter tensors must be finite")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True
        self.op = ""
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
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
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar -------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.is_leaf = False
        out.op = op
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _record(out, (a, b), backward, "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    xd = x.data
    x2 = xd * xd
    t = np.tanh(_GELU_C * xd * (1.0 + 0.044715 * x2))
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return _record(out, (x,), backward, "gelu")


# -- linear algebra --------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, ad.shape),
                None if gb is None else _unbroadcast(gb, bd.shape))

    return _record(ad @ bd, (a, b), backward, "matmul")


# -- shape manipulation ------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {src} as {tuple(shape)}") from None
    return _record(out, (x,), lambda g: (g.reshape(src),), "reshape")


def flatten(x: Tensor, start_axis: int = 1) -> Tensor:
    return reshape(x, x.shape[:start_axis] + (-1,))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeError("concat: need at least one tensor")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeError(f"concat: shape {t.shape} does not match {ts[0].shape} off axis {axis}")
    cuts = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _record(np.concatenate([t.data for t in ts], axis=ax), ts,
                   lambda g: tuple(np.split(g, cuts, axis=ax)), "concat")


def getitem(x: Tensor, index) -> Tensor:
    src = x.shape

    def backward(g):
        full = np.zeros(src, dtype=DTYPE)
        np.add.at(full, index, g)
        return (full,)

    return _record(x.data[index], (x,), backward, "getitem")


# -- reductions ----------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    src = x.shape
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, src).copy(),)

    return _record(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum_(x, axis, keepdims), 1.0 / count)


# -- neural-net specific -------------------------------------------------------

def softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax_lastdim: last dimension must be >= 1, got shape {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record(s, (x,), backward, "softmax")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity outside training or when ``p == 0``."""
    if not train or p <= 0.0:
        return x
    if p >= 1.0:
        raise ValueError("dropout probability must be < 1")
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _record(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm site."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, features: int, momentum: float = 0.1, eps: float = 1e-5) -> BatchNormState:
        return cls(np.zeros(features), np.ones(features), momentum, eps)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, train: bool) -> Tensor:
    """Normalize the columns of a ``rows x features`` matrix.

    Train mode uses biased batch statistics for the output and folds the
    unbiased variance into the running estimate; eval mode uses the running
    estimate only.
    """
    if x.ndim != 2:
        raise ShapeError(f"batchnorm: expected a 2-D input, got shape {x.shape}")
    rows, feats = x.shape
    if gamma.shape != (feats,) or beta.shape != (feats,):
        raise ShapeError(f"batchnorm: affine shapes {gamma.shape}/{beta.shape} vs {feats} features")
    eps = state.eps
    gd = gamma.data
    if train:
        if rows < 2:
            raise ShapeError("batchnorm: train mode needs at least 2 rows (variance undefined)")
        mu = x.data.mean(axis=0)
        xc = x.data - mu
        var = (xc * xc).mean(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu
        state.running_var = (1 - m) * state.running_var + m * var * rows / (rows - 1)

        def backward(g):
            dxhat = g * gd
            dx = inv / rows * (rows * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return dx, (g * xhat).sum(axis=0), g.sum(axis=0)
    else:
        inv = 1.0 / np.sqrt(state.running_var + eps)
        xhat = (x.data - state.running_mean) * inv

        def backward(g):
            return g * gd * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _record(xhat * gd + beta.data, (x, gamma, beta), backward, "batchnorm")


def mse(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over every element."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ShapeError("mse: empty operands")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        gd = 2.0 * diff / n * g
        return gd, -gd

    return _record(np.asarray((diff * diff).mean()), (pred, target), backward, "mse")


# -- graph traversal -------------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        if node._consumed:
            raise GraphError("graph already released by a previous backward(); run a new forward pass")
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The recorded graph is released afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward() already called on this graph; run a new forward pass")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires grad")
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=DTYPE)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in order:
        if not node.is_leaf:
            node._parents = ()
            node._backward = None
            node._consumed = True


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
