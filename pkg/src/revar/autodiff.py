"""Reverse-mode differentiation over float64 numpy arrays.

Every op records its parents and a closure mapping the output gradient to
parent gradients.  :func:`backward` walks that graph once in reverse
topological order and then drops it, so each forward pass builds a fresh tape.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, ShapeError

# per thread, so concurrent training runs do not switch each other's tape off
_STATE = threading.local()


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = prev


def is_grad_enabled() -> bool:
    return getattr(_STATE, "enabled", True)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # operators --------------------------------------------------------
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

    def __getitem__(self, idx):
        return take_rows(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data, parents, backward: Callable) -> Tensor:
    """Wrap ``data`` as the output of an op; ``backward(g)`` returns one gradient per parent."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


# elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(a.data + b.data, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(a.data - b.data, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        a.data * b.data, (a, b), lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape))
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)

    return make_op(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    return make_op(a.data**p, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,))


def log(a, clamp: float | None = None) -> Tensor:
    """Natural log; with ``clamp`` the input is floored at that value (zero gradient below it)."""
    a = as_tensor(a)
    x = a.data
    if clamp is not None:
        below = x < clamp
        x = np.where(below, clamp, x)

        def backward(g):
            return (np.where(below, 0.0, g / x),)
    else:

        def backward(g):
            return (g / x,)

    return make_op(np.log(x), (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g * 0.5 / out,))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return make_op(np.where(pos, a.data, slope * a.data), (a,), lambda g: (np.where(pos, g, slope * g),))


def prelu(x, weight) -> Tensor:
    """Parametric ReLU with a learnable slope broadcast over the last axis."""
    x, weight = as_tensor(x), as_tensor(weight)
    pos = x.data > 0
    out = np.where(pos, x.data, weight.data * x.data)

    def backward(g):
        gx = np.where(pos, g, weight.data * g)
        gw = unbroadcast(np.where(pos, 0.0, g * x.data), weight.shape)
        return gx, gw

    return make_op(out, (x, weight), backward)


# reductions and shape ops --------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return make_op(a.data.T, (a,), lambda g: (g.T,))


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return make_op(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def take_rows(a, idx) -> Tensor:
    """Index the first axis with an int array, boolean mask, slice or int."""
    a = as_tensor(a)
    if isinstance(idx, np.ndarray) and idx.dtype == bool:
        idx = np.flatnonzero(idx)
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        if isinstance(idx, np.ndarray) or isinstance(idx, list):
            np.add.at(full, np.asarray(idx), g)
        else:
            full[idx] += g
        return (full,)

    return make_op(out, (a,), backward)


def scatter_add_rows(src, index, num_rows: int) -> Tensor:
    """out[index[e]] += src[e] along the first axis."""
    src = as_tensor(src)
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((num_rows,) + src.shape[1:])
    np.add.at(out, index, src.data)
    return make_op(out, (src,), lambda g: (g[index],))


# linear algebra --------------------------------------------------------------


def matmul(a, b) -> Tensor:
    from .sparse import SparseMatrix, spmm

    if isinstance(a, SparseMatrix):
        return spmm(a, b)
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return make_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


# normalization / softmax --------------------------------------------------


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return make_op(out, (a,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return make_op(out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def normalize_rows(a) -> Tensor:
    """L2-normalize each row; all-zero rows map to zero with zero gradient."""
    a = as_tensor(a)
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    out = np.where(zero, 0.0, a.data / safe)

    def backward(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        return (np.where(zero, 0.0, (g - out * proj) / safe),)

    return make_op(out, (a,), backward)


# backward pass ------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires grad."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("backward needs a scalar tensor")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if pg.shape != parent.shape:
                pg = pg.reshape(parent.shape)
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in order:
        node._parents = ()
        node._backward = None


# gradient checking ----------------------------------------------------------------


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5, max_entries: int | None = None, seed: int = 0,
               floor: float = 1e-5):
    """Compare analytic gradients of ``f()`` against central differences.

    ``params`` is a dict name -> Tensor (or a list of Tensors).  Returns a dict
    name -> max-norm relative error ``|a - n|_inf / max(|a|_inf, |n|_inf, floor)``.
    The floor keeps parameters whose true gradient is zero (a bias feeding a
    BatchNorm, say) from reporting difference-quotient noise as a 100% error.  ``max_entries`` samples that many
    coordinates per parameter instead of all of them.
    """
    if not 0 < eps <= 1e-3:
        raise ContractError("eps must lie in (0, 1e-3]")
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    for p in params.values():
        p.grad = None
    loss = f()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            num = np.empty(len(idx))
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                up = f().item()
                flat[i] = orig - eps
                down = f().item()
                flat[i] = orig
                num[j] = (up - down) / (2 * eps)
            ana = analytic[name].reshape(-1)[idx]
            scale = max(np.abs(ana).max(initial=0.0), np.abs(num).max(initial=0.0))
            diff = np.abs(ana - num).max(initial=0.0)
            report[name] = float(diff / max(scale, floor))
    for p in params.values():
        p.grad = None
    return report
