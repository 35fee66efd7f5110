"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are built define-by-run: every operation on a :class:`Tensor` records
its parents and a closure that maps the upstream gradient to gradients for
each parent. :func:`backward` walks the graph once in reverse topological
order and accumulates into ``Tensor.grad`` for every node that requires it.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

DTYPE = np.float64


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


class Tensor:
    """A node in the computation graph.

    ``data`` is treated as immutable once the node exists. ``grad`` is None
    until a backward pass reaches the node.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = ""):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable | None = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # operator sugar
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

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(out, (a, b), bw, "div")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data**exponent

    def bw(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _make(out, (a,), bw, "pow")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def smooth_l1(a) -> Tensor:
    """Elementwise 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise."""
    a = as_tensor(a)
    x = a.data
    small = np.abs(x) < 1.0
    out = np.where(small, 0.5 * x * x, np.abs(x) - 0.5)
    return _make(out, (a,), lambda g: (g * np.where(small, x, np.sign(x)),), "smooth_l1")


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros(a.shape, dtype=DTYPE)
        np.add.at(full, index, g)
        return (full,)

    return _make(out, (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, bw, "concat")


# ---------------------------------------------------------------------------
# linear algebra and network primitives


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _make(out, (a, b), bw, "matmul")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DomainError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DomainError("log_softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bw, "log_softmax")


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (N x C)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(logits, axis=-1)
    picked = getitem(logp, (np.arange(labels.shape[0]), labels))
    return -mean(picked)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = mean(a, axis=-1, keepdims=True)
    centered = a - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return centered / sqrt(var + eps) * gain + bias


def _pad_spec(padding, width: int) -> tuple[int, int]:
    if padding == "same":
        left = (width - 1) // 2
        return left, width - 1 - left
    if isinstance(padding, (tuple, list)):
        return int(padding[0]), int(padding[1])
    return int(padding), int(padding)


def conv1d(x, kernels, stride: int = 1, padding=0) -> Tensor:
    """Cross-correlate ``x`` (C_in x L or N x C_in x L) with ``kernels`` (C_out x C_in x w).

    ``padding`` is an int (both sides), a (left, right) pair, or ``"same"``.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    if xd.ndim != 3 or kernels.ndim != 3:
        raise DimensionError(f"conv1d expects (N,C,L) input and (O,C,w) kernels, got {x.shape} and {kernels.shape}")
    n, c_in, length = xd.shape
    c_out, k_in, width = kernels.shape
    if k_in != c_in:
        raise DimensionError(f"conv1d channel mismatch: input {x.shape}, kernels {kernels.shape}")
    if stride < 1:
        raise DomainError("conv1d stride must be >= 1")
    left, right = _pad_spec(padding, width)
    padded_len = length + left + right
    if width > padded_len:
        raise DomainError(f"kernel width {width} exceeds padded input length {padded_len}")
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if (left or right) else xd
    out_len = (padded_len - width) // stride + 1
    # windows: (N, C_in, out_len, w)
    windows = np.lib.stride_tricks.sliding_window_view(xp, width, axis=2)[:, :, ::stride, :]
    out = np.einsum("nctk,ock->not", windows, kernels.data, optimize=True)
    if unbatched:
        out = out[0]

    def bw(g):
        g3 = g[None] if unbatched else g
        gk = np.einsum("not,nctk->ock", g3, windows, optimize=True) if kernels.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            span = stride * (out_len - 1) + 1
            for k in range(width):
                gxp[:, :, k : k + span : stride] += np.einsum("not,oc->nct", g3, kernels.data[:, :, k])
            gx = gxp[:, :, left : left + length]
            if unbatched:
                gx = gx[0]
        return gx, gk

    return _make(out, (x, kernels), bw, "conv1d")


def max_pool_global(x) -> Tensor:
    """Maximum over the last axis; ties route the gradient to the lowest index."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DomainError("max_pool_global needs a non-empty last axis")
    idx = np.argmax(x.data, axis=-1)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(full, idx[..., None], np.asarray(g)[..., None], axis=-1)
        return (full,)

    return _make(out, (x,), bw, "max_pool_global")


# ---------------------------------------------------------------------------
# gradient computation


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``grad`` of every reachable node requiring it."""
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    upstream: dict[int, np.ndarray] = {id(root): np.ones(root.shape, dtype=DTYPE)}
    for node in reversed(order):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in upstream:
                upstream[key] = upstream[key] + pg
            else:
                upstream[key] = np.asarray(pg, dtype=DTYPE)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def numerical_gradient(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` with respect to ``param.data``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = fn().item()
        flat[i] = orig - h
        minus = fn().item()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the larger of the two gradients' max magnitudes."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    zero_grad(params)
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = numerical_gradient(fn, p, h)
        worst = max(worst, relative_error(analytic, numeric))
    zero_grad(params)
    return worst
