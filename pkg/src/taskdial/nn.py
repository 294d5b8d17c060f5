"""Parameter store and network layers built on the autodiff core."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


class ParamStore:
    """Ordered, uniquely named trainable parameters plus the model RNG.

    A single store (and a single seeded generator) backs a whole model,
    which makes init and dropout reproducible from one integer seed.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def uniform(self, name: str, shape: tuple, fan_in: Optional[int] = None) -> Tensor:
        """New parameter from U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
        if name in self._params:
            raise ShapeError(f"duplicate parameter name: {name}")
        fan = fan_in if fan_in is not None else shape[0]
        bound = 1.0 / math.sqrt(max(fan, 1))
        data = self.rng.uniform(-bound, bound, size=shape).astype(T.default_dtype())
        p = Tensor(data, requires_grad=True)
        self._params[name] = p
        return p

    def constant(self, name: str, shape: tuple, value: float) -> Tensor:
        if name in self._params:
            raise ShapeError(f"duplicate parameter name: {name}")
        data = np.full(shape, value, dtype=T.default_dtype())
        p = Tensor(data, requires_grad=True)
        self._params[name] = p
        return p

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def n_scalars(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self._params):
            missing = set(self._params) - set(arrays)
            extra = set(arrays) - set(self._params)
            raise ShapeError(f"parameter set mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, p in self._params.items():
            a = arrays[k]
            if a.shape != p.data.shape:
                raise ShapeError(f"parameter {k}: stored shape {a.shape} != expected {p.data.shape}")
            p.data = a.astype(p.data.dtype, copy=True)


class NetContext:
    """Shared per-model context: parameters, dropout rate, train/eval flag."""

    def __init__(self, store: ParamStore, dropout: float = 0.0):
        self.store = store
        self.dropout = dropout
        self.training = True

    def drop(self, x: Tensor) -> Tensor:
        if self.training and self.dropout > 0.0:
            return T.dropout(x, self.dropout, self.store.rng)
        return x


class Linear:
    """y = x @ W (+ b). W is [d_in, d_out]."""

    def __init__(self, ctx: NetContext, name: str, d_in: int, d_out: int, bias: bool = True):
        self.w = ctx.store.uniform(f"{name}.w", (d_in, d_out), fan_in=d_in)
        self.b = ctx.store.uniform(f"{name}.b", (d_out,), fan_in=d_in) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.w)
        if self.b is not None:
            out = T.add(out, self.b)
        return out


class LayerNorm:
    def __init__(self, ctx: NetContext, name: str, d: int, eps: float = 1e-5):
        self.gain = ctx.store.constant(f"{name}.gain", (d,), 1.0)
        self.bias = ctx.store.constant(f"{name}.bias", (d,), 0.0)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class MultiHeadAttention:
    """Attention sublayer: attend from q into kv, add residual, layer norm.

    Calling convention follows the model's notation: ``att(kv, q)`` reads
    values from the first argument at positions weighted by the second,
    and the output keeps q's shape. The whole sublayer is

        out = LN(q + Dropout(MultiHead(q, kv, kv)))

    with no feed-forward stage. ``mask`` is [.., Lq, Lk] (or broadcastable);
    False entries get attention weight exactly 0.0, and a query row with no
    True key comes out as LN(q) for that row (zero attention output).

    Returns (out, weights) where weights is [.., n_heads, Lq, Lk].
    """

    def __init__(self, ctx: NetContext, name: str, d: int, n_heads: int):
        if d % n_heads != 0:
            raise ShapeError(f"model width {d} not divisible by {n_heads} heads")
        self.ctx = ctx
        self.d = d
        self.n_heads = n_heads
        self.d_head = d // n_heads
        self.wq = ctx.store.uniform(f"{name}.wq", (d, d), fan_in=d)
        self.wk = ctx.store.uniform(f"{name}.wk", (d, d), fan_in=d)
        self.wv = ctx.store.uniform(f"{name}.wv", (d, d), fan_in=d)
        self.wo = ctx.store.uniform(f"{name}.wo", (d, d), fan_in=d)
        self.norm = LayerNorm(ctx, f"{name}.norm", d)

    def _split(self, x: Tensor) -> Tensor:
        """[.., L, d] -> [.., h, L, d_head]."""
        lead = x.shape[:-2]
        L = x.shape[-2]
        x = T.reshape(x, lead + (L, self.n_heads, self.d_head))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return T.transpose(x, axes)

    def __call__(self, kv: Tensor, q: Tensor, mask: Optional[np.ndarray] = None):
        if kv.shape[-1] != self.d or q.shape[-1] != self.d:
            raise ShapeError(
                f"attention width mismatch: kv {kv.shape}, q {q.shape}, expected last dim {self.d}"
            )
        lead = q.shape[:-2]
        lq, lk = q.shape[-2], kv.shape[-2]

        qh = self._split(T.matmul(q, self.wq))  # [.., h, Lq, dh]
        kh = self._split(T.matmul(kv, self.wk))  # [.., h, Lk, dh]
        vh = self._split(T.matmul(kv, self.wv))

        kt_axes = tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2)
        scores = T.matmul(qh, T.transpose(kh, kt_axes))  # [.., h, Lq, Lk]
        scores = T.mul(scores, 1.0 / math.sqrt(self.d_head))

        if mask is None:
            weights = T.softmax_rows(scores)
        else:
            mask = np.asarray(mask, dtype=bool)
            # accept [.., Lq, Lk] by inserting the head axis
            if mask.ndim == scores.ndim - 1:
                mask = mask[..., None, :, :]
            weights = T.masked_softmax(scores, mask)

        weights = self.ctx.drop(weights)
        mixed = T.matmul(weights, vh)  # [.., h, Lq, dh]
        back = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        mixed = T.transpose(mixed, back)  # [.., Lq, h, dh]
        mixed = T.reshape(mixed, lead + (lq, self.d))
        proj = T.matmul(mixed, self.wo)
        out = self.norm(T.add(q, self.ctx.drop(proj)))
        return out, weights


class GRUCell:
    """Single-step gated recurrent cell with fused gate weights."""

    def __init__(self, ctx: NetContext, name: str, d_in: int, d_h: int):
        self.d_h = d_h
        self.wx = ctx.store.uniform(f"{name}.wx", (d_in, 3 * d_h), fan_in=d_in)
        self.wh = ctx.store.uniform(f"{name}.wh", (d_h, 3 * d_h), fan_in=d_h)
        self.b = ctx.store.uniform(f"{name}.b", (3 * d_h,), fan_in=d_h)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        """x [N, d_in], h [N, d_h] -> next h [N, d_h]."""
        gx = T.add(T.matmul(x, self.wx), self.b)  # [N, 3dh]
        gh = T.matmul(h, self.wh)
        d = self.d_h
        r = T.sigmoid(T.add(T.narrow(gx, -1, 0, d), T.narrow(gh, -1, 0, d)))
        z = T.sigmoid(T.add(T.narrow(gx, -1, d, d), T.narrow(gh, -1, d, d)))
        n = T.tanh(T.add(T.narrow(gx, -1, 2 * d, d), T.mul(r, T.narrow(gh, -1, 2 * d, d))))
        one_minus_z = T.sub(1.0, z)
        return T.add(T.mul(one_minus_z, n), T.mul(z, h))
