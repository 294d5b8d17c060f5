"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus an optional gradient and a backward
closure. Ops build a graph through parent links; ``Tensor.backward()``
walks it in reverse topological order. Arrays are float-valued only;
token ids and masks travel alongside as plain numpy int/bool arrays.

Every forward op checks its result for NaN/Inf (disable with
``finite_checks(False)`` for throughput-critical runs). The default
dtype is float32; ``use_dtype(np.float64)`` switches new tensors to
64-bit, which gradient checking relies on.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import NumericsError, ShapeError

_state = {
    "dtype": np.float32,
    "grad": True,
    "finite": True,
}


def default_dtype():
    return _state["dtype"]


def grad_enabled() -> bool:
    return _state["grad"]


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily change the dtype used for new tensors."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference / validation)."""
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    prev = _state["finite"]
    _state["finite"] = enabled
    try:
        yield
    finally:
        _state["finite"] = prev


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    """Immutable dense array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_state["dtype"])
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- basic introspection ------------------------------------------------

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
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, grad={self.requires_grad})"

    # -- autodiff plumbing --------------------------------------------------

    def _accum(self, g: np.ndarray):
        # never use in-place += here: g may be a view of another grad buffer
        self.grad = g if self.grad is None else self.grad + g

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def _finite_or_raise(arr: np.ndarray, op: str):
    if _state["finite"] and not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by {op}")


def _node(data: np.ndarray, op: str, parents: Iterable[Tensor], backward) -> Tensor:
    _finite_or_raise(data, op)
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if _state["grad"] and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def as_tensor(x: ArrayLike) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_state["dtype"]))


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast to reach g's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- arithmetic --------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_reduce_to(g, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(g, b.data.shape))

    return _node(out_data, "add", (a, b), bwd)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_reduce_to(g, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(-g, b.data.shape))

    return _node(out_data, "sub", (a, b), bwd)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_reduce_to(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(g * a.data, b.data.shape))

    return _node(out_data, "mul", (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accum(_reduce_to(g @ b.data.swapaxes(-1, -2), a.data.shape))
        if b.requires_grad:
            b._accum(_reduce_to(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return _node(out_data, "matmul", (a, b), bwd)


# -- shape ops ---------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.reshape(shape)
    src_shape = a.data.shape

    def bwd(g):
        a._accum(g.reshape(src_shape))

    return _node(out_data, "reshape", (a,), bwd)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out_data = a.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        a._accum(g.transpose(inv))

    return _node(out_data, "transpose", (a,), bwd)


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast to ``shape``; gradient sums over the broadcast axes."""
    a = as_tensor(a)
    out_data = np.broadcast_to(a.data, shape)
    src_shape = a.data.shape

    def bwd(g):
        a._accum(_reduce_to(g, src_shape))

    return _node(out_data, "expand", (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return _node(out_data, "concat", tuple(tensors), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis``."""
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = a.data[idx]

    def bwd(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        a._accum(buf)

    return _node(out_data, "narrow", (a,), bwd)


def index_select(a: Tensor, axis: int, indices: np.ndarray) -> Tensor:
    """Gather rows along ``axis`` with an integer index array."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    out_data = np.take(a.data, indices, axis=axis)

    def bwd(g):
        buf = np.zeros_like(a.data)
        moved = np.moveaxis(buf, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        a._accum(buf)

    return _node(out_data, "index_select", (a,), bwd)


def embed(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup: ids of any shape -> ids.shape + (d,)."""
    ids = np.asarray(ids, dtype=np.int64)
    out_data = weight.data[ids]

    def bwd(g):
        buf = np.zeros_like(weight.data)
        np.add.at(buf, ids.reshape(-1), g.reshape(-1, weight.data.shape[-1]))
        weight._accum(buf)

    return _node(out_data, "embed", (weight,), bwd)


# -- pointwise nonlinearities -------------------------------------------------


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a._accum(g * out_data * (1.0 - out_data))

    return _node(out_data, "sigmoid", (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def bwd(g):
        a._accum(g * (1.0 - out_data * out_data))

    return _node(out_data, "tanh", (a,), bwd)


def tsum(a: Tensor, axis=None) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape).copy())
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _node(out_data, "sum", (a,), bwd)


def tmean(a: Tensor) -> Tensor:
    return mul(tsum(a), 1.0 / a.size)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate <= 0. Caller gates on train mode."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype)
    scale = 1.0 / (1.0 - rate)
    out_data = a.data * keep * scale

    def bwd(g):
        a._accum(g * keep * scale)

    return _node(out_data, "dropout", (a,), bwd)


# -- normalizations and attention kernels -------------------------------------


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        a._accum(out_data * (g - dot))

    return _node(out_data, "softmax_rows", (a,), bwd)


def masked_softmax(a: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis where ``mask`` is True.

    Masked positions get weight exactly 0.0. Rows with no True entry
    come out as all-zero rows (no uniform fallback), which the attention
    layer turns into a residual-only pass.
    """
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    neg = np.where(mask, a.data, -np.inf)
    rowmax = neg.max(axis=-1, keepdims=True)
    alive = rowmax > -np.inf
    shifted = neg - np.where(alive, rowmax, 0.0)
    with np.errstate(invalid="ignore"):
        e = np.exp(shifted)
    denom = e.sum(axis=-1, keepdims=True)
    out_data = e / np.where(denom > 0.0, denom, 1.0)

    def bwd(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        a._accum(out_data * (g - dot))

    return _node(out_data, "masked_softmax", (a,), bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis vector to zero mean / unit variance, then affine."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.data.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out_data = xhat * gain.data + bias.data

    def bwd(g):
        if gain.requires_grad:
            gain._accum((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias._accum(g.reshape(-1, d).sum(axis=0))
        if a.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            a._accum(inv * (dxhat - m1 - xhat * m2))

    return _node(out_data, "layer_norm", (a, gain, bias), bwd)


# -- losses -------------------------------------------------------------------


def cross_entropy_smoothed(
    logits: Tensor,
    targets: np.ndarray,
    smoothing: float = 0.0,
    pad_index: int = -1,
) -> Tensor:
    """Label-smoothed token cross-entropy, averaged over non-pad positions.

    ``logits`` is [N, V]; ``targets`` holds N token indices. The smoothed
    target distribution is (1 - eps) one-hot + eps / V uniform, so
    smoothing=0 is plain cross-entropy.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n, v = logits.data.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} does not match logits rows {n}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= v:
        bad = targets[(targets < 0) | (targets >= v)][0]
        raise IndexError(f"target index {bad} outside vocabulary of size {v}")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    keep = (targets != pad_index).astype(logits.data.dtype)
    count = max(keep.sum(), 1.0)
    nll = -logp[np.arange(n), targets]
    if smoothing > 0.0:
        per_pos = (1.0 - smoothing) * nll - (smoothing / v) * logp.sum(axis=-1)
    else:
        per_pos = nll
    out_data = np.asarray((per_pos * keep).sum() / count, dtype=logits.data.dtype)

    def bwd(g):
        probs = np.exp(logp)
        q = np.full((n, v), smoothing / v, dtype=logits.data.dtype)
        q[np.arange(n), targets] += 1.0 - smoothing
        logits._accum((probs - q) * (g * keep / count)[:, None])

    return _node(out_data, "cross_entropy_smoothed", (logits,), bwd)


def binary_cross_entropy(p: Tensor, y: np.ndarray) -> Tensor:
    """Mean of -y log p - (1-y) log(1-p); p clamped to [1e-7, 1-1e-7]."""
    p = as_tensor(p)
    y = np.asarray(y, dtype=p.data.dtype)
    lo, hi = 1e-7, 1.0 - 1e-7
    c = np.clip(p.data, lo, hi)
    out_data = np.asarray(
        (-y * np.log(c) - (1.0 - y) * np.log(1.0 - c)).mean(), dtype=p.data.dtype
    )
    n = float(c.size)

    def bwd(g):
        inside = (p.data > lo) & (p.data < hi)
        grad = np.where(inside, (c - y) / (c * (1.0 - c)), 0.0)
        p._accum(grad * (g / n))

    return _node(out_data, "binary_cross_entropy", (p,), bwd)


def log_softmax_rows(a: Tensor) -> Tensor:
    """Log-softmax over the last axis (used by beam scoring)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def bwd(g):
        probs = np.exp(out_data)
        a._accum(g - probs * g.sum(axis=-1, keepdims=True))

    return _node(out_data, "log_softmax_rows", (a,), bwd)


def positional_encoding(length: int, d: int, dtype=None) -> np.ndarray:
    """Sinusoidal position table [length, d]; even channels sin, odd cos."""
    dtype = dtype or _state["dtype"]
    pos = np.arange(length, dtype=np.float64)[:, None]
    chan = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(chan / 2.0) / d)
    table = np.where(chan % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)
