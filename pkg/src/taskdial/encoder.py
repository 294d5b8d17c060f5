"""Token embedding, positional encoding, and target shifting.

Source-side text (context, user utterance, serialized states) shares one
embedding matrix; target responses get their own. Sequences are encoded
as LayerNorm(E(x) + PE(x)); ontology token lists (domains, slots) skip
the positional term since they carry no order semantics.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DataError, ShapeError
from .nn import LayerNorm, NetContext
from .tensor import Tensor


class Encoder:
    """Embedding front end shared by every model component."""

    def __init__(self, ctx: NetContext, d: int, n_src: int, n_res: int, max_len: int = 512):
        self.ctx = ctx
        self.d = d
        self.max_len = max_len
        self.e_src = ctx.store.uniform("enc.e_src", (n_src, d), fan_in=d)
        self.e_res = ctx.store.uniform("enc.e_res", (n_res, d), fan_in=d)
        self.norm_seq = LayerNorm(ctx, "enc.norm_seq", d)
        self.norm_flat = LayerNorm(ctx, "enc.norm_flat", d)
        self._pe_cache: dict = {}

    def _pe(self, length: int) -> np.ndarray:
        key = (length, str(T.default_dtype()))
        if key not in self._pe_cache:
            if length > self.max_len:
                raise ShapeError(f"sequence length {length} exceeds max positions {self.max_len}")
            self._pe_cache[key] = T.positional_encoding(length, self.d)
        return self._pe_cache[key]

    def _table(self, side: str) -> Tensor:
        if side == "src":
            return self.e_src
        if side == "res":
            return self.e_res
        raise ShapeError(f"unknown embedding side: {side}")

    def encode(self, ids: np.ndarray, side: str = "src") -> Tensor:
        """Sequence encode: LayerNorm(E(ids) + PE). ids [.., L] -> [.., L, d]."""
        ids = np.asarray(ids, dtype=np.int64)
        emb = T.embed(self._table(side), ids)
        length = ids.shape[-1]
        if length:
            emb = T.add(emb, Tensor(self._pe(length)))
        return self.norm_seq(self.ctx.drop(emb))

    def encode_flat(self, ids: np.ndarray, side: str = "src") -> Tensor:
        """Order-free encode: LayerNorm(E(ids)), no positional term."""
        ids = np.asarray(ids, dtype=np.int64)
        emb = T.embed(self._table(side), ids)
        return self.norm_flat(self.ctx.drop(emb))


def shift_target(sequence):
    """Split a begin..end sequence into decoder input and targets.

    [B, a, b, E] -> input [B, a, b], targets [a, b, E]; both length L-1.
    Accepts lists or numpy arrays; arrays shift along the last axis.
    """
    if isinstance(sequence, np.ndarray):
        if sequence.shape[-1] < 2:
            raise DataError(f"cannot shift a length-{sequence.shape[-1]} sequence")
        return sequence[..., :-1], sequence[..., 1:]
    if len(sequence) < 2:
        raise DataError(f"cannot shift a length-{len(sequence)} sequence")
    return list(sequence[:-1]), list(sequence[1:])
