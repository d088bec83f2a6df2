"""Dense tensors with reverse-mode automatic differentiation.

Every differentiable op records a :class:`Node` carrying a monotonically
increasing sequence number. ``backward`` collects the nodes reachable from the
loss into a :class:`Tape` and replays them in exact reverse recording order, so
gradient accumulation is deterministic run to run.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class NumericError(ArithmeticError):
    """A NaN or Inf reached a place where only finite values are allowed."""


_seq = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run forward ops without recording them."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("seq", "parents", "backward", "name")

    def __init__(self, parents, backward, name):
        self.seq = next(_seq)
        self.parents = parents
        self.backward = backward
        self.name = name


class Tensor:
    """N-dimensional float array with optional gradient tracking.

    Leaves created with ``requires_grad=True`` receive ``.grad`` after
    :func:`backward`; intermediate results only carry the recording node.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    # -- basic properties ---------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dims(self) -> list:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar -----------------------------------------------------
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

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, (int, float)):
        return Tensor(np.asarray(x, dtype=np.float64))
    return Tensor(np.asarray(x, dtype=dtype))


def _coerce_pair(a, b):
    """Wrap python scalars/arrays so they follow the other operand's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


def apply_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, name: str = "op") -> Tensor:
    """Wrap ``data`` as the output of a recorded op.

    ``backward_fn(grad_out)`` must return one gradient (or ``None``) per parent.
    """
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(tuple(parents), backward_fn, name)
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- tape -------------------------------------------------------------------
class Tape:
    """Recorded ops reachable from one output, in recording order."""

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def collect(cls, output: Tensor) -> "Tape":
        seen = set()
        nodes = []
        stack = [output]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append((node, t))
            stack.extend(p for p in node.parents if p.requires_grad)
        nodes.sort(key=lambda pair: pair[0].seq)
        return cls(nodes)

    def __len__(self):
        return len(self.nodes)

    def replay_backward(self, output: Tensor, seed: np.ndarray) -> None:
        pending = {id(output): seed}
        for node, out in reversed(self.nodes):
            g = pending.pop(id(out), None)
            if g is None:
                continue
            grads = node.backward(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._node is None:
                    pg = np.asarray(pg, dtype=parent.dtype).reshape(parent.shape)
                    if parent.grad is None:
                        parent.grad = pg.copy()
                    else:
                        parent.grad += pg
                else:
                    key = id(parent)
                    if key in pending:
                        pending[key] = pending[key] + pg
                    else:
                        pending[key] = pg


def backward(loss: Tensor, grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``."""
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.dtype).reshape(loss.shape)
    if not loss.requires_grad:
        return
    if loss._node is None:
        loss.grad = grad.copy() if loss.grad is None else loss.grad + grad
        return
    Tape.collect(loss).replay_backward(loss, grad)


# -- elementwise arithmetic --------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return apply_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return apply_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def bw(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return apply_op(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = a.data / b.data

    def bw(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return apply_op(out, (a, b), bw, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    def bw(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return apply_op(a.data**exponent, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return apply_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return apply_op(np.maximum(a.data, 0), (a,), lambda g: (np.where(mask, g, 0),), "relu")


def sigmoid(a: Tensor) -> Tensor:
    # standard logistic, increasing in its argument
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return apply_op(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return apply_op(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return apply_op(out, (a,), bw, "softmax")


# -- reductions and shape ops ------------------------------------------------
def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return apply_op(np.asarray(out, dtype=a.dtype), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return apply_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return apply_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    basic = _is_basic_index(idx)

    def bw(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return apply_op(np.array(a.data[idx], copy=True), (a,), bw, "getitem")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Order-preserving concatenation; backward splits at the same offsets."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one part")
    ax = axis % parts[0].ndim
    for p in parts[1:]:
        if p.ndim != parts[0].ndim or any(p.shape[i] != parts[0].shape[i] for i in range(p.ndim) if i != ax):
            raise ShapeError(f"cannot concatenate {p.shape} with {parts[0].shape} on axis {axis}")
    offsets = np.cumsum([p.shape[ax] for p in parts])[:-1]
    out = np.concatenate([p.data for p in parts], axis=ax)

    def bw(g):
        return tuple(np.split(g, offsets, axis=ax))

    return apply_op(out, parts, bw, "concat")


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("stack needs at least one part")
    out = np.stack([p.data for p in parts], axis=axis)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return apply_op(out, parts, bw, "stack")


# -- linear algebra ----------------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D; use fully_connected for vectors")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul mismatch {a.shape} @ {b.shape}")

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return apply_op(a.data @ b.data, (a, b), bw, "matmul")


def fully_connected(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``weight @ x + bias`` applied over the last axis of ``x``.

    ``x`` may be a single vector ``[n]`` or carry leading batch axes ``[..., n]``.
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"fully_connected: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"fully_connected: bias {bias.shape} vs weight {weight.shape}")
    if not np.isfinite(x.data).all():
        raise NumericError("fully_connected: non-finite input")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g @ weight.data) if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, x.shape[-1]) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return apply_op(out, parents, bw, "fully_connected")


# -- loss --------------------------------------------------------------------
BCE_EPS = 1e-7


def bce_loss(p: Tensor, y, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against 0/1 targets ``y``.

    ``p`` is clamped to ``[eps, 1 - eps]``; the gradient is zero where the
    clamp is active.
    """
    y = np.asarray(y, dtype=p.dtype).reshape(p.shape)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("bce_loss targets must be 0 or 1")
    if not np.isfinite(p.data).all():
        raise NumericError("bce_loss: non-finite probability")
    pc = np.clip(p.data, eps, 1 - eps)
    n = p.data.size
    losses = -y * np.log(pc) - (1 - y) * np.log(1 - pc)
    inside = (p.data >= eps) & (p.data <= 1 - eps)

    def bw(g):
        return (g * inside * (-y / pc + (1 - y) / (1 - pc)) / n,)

    return apply_op(np.asarray(losses.mean(), dtype=p.dtype), (p,), bw, "bce_loss")
