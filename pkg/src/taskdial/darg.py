"""Joint dialogue act and response generator.

A learned act vector occupies position 0 of the decoder stream, ahead of
the shifted response embeddings. Each block applies causally masked
self-attention, then cross-attention to the context, the user utterance,
the state features, and the DB feature, in that order. Position 0 maps
to per-act sigmoid probabilities; later positions map to response token
logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import PAD_ID, Vocab
from .encoder import Encoder
from .errors import ShapeError
from .kb import N_BINS
from .nn import MultiHeadAttention, NetContext
from .ontology import Ontology
from .tensor import Tensor


@dataclass
class GenConfig:
    n_blocks: int = 3
    n_heads: int = 8
    d: int = 256
    max_res_len: int = 60
    beam_size: int = 5
    length_norm: float = 0.6
    act_threshold: float = 0.5
    use_act_loss: bool = True
    label_smoothing: float = 0.1


class DARG:
    """Stacked-attention decoder with an act latent at position 0."""

    def __init__(self, ctx: NetContext, encoder: Encoder, ontology: Ontology, res_vocab: Vocab, cfg: GenConfig):
        self.ctx = ctx
        self.encoder = encoder
        self.ontology = ontology
        self.vocab = res_vocab
        self.cfg = cfg
        d, h = cfg.d, cfg.n_heads
        self.act_latent = ctx.store.uniform("gen.act_latent", (d,), fan_in=d)
        self.blocks = [
            {
                "self": MultiHeadAttention(ctx, f"gen.block{b}.self", d, h),
                "ctx": MultiHeadAttention(ctx, f"gen.block{b}.ctx", d, h),
                "utt": MultiHeadAttention(ctx, f"gen.block{b}.utt", d, h),
                "state": MultiHeadAttention(ctx, f"gen.block{b}.state", d, h),
                "db": MultiHeadAttention(ctx, f"gen.block{b}.db", d, h),
            }
            for b in range(cfg.n_blocks)
        ]
        self.w_act = ctx.store.uniform("gen.w_act", (d, ontology.n_acts), fan_in=d)
        self.w_gen = ctx.store.uniform("gen.w_gen", (d, len(res_vocab)), fan_in=d)
        self.db_bins = ctx.store.uniform("gen.db_bins", (N_BINS, d), fan_in=d)
        self.domain_ids = None  # filled against the source vocab at model wiring

    def set_domain_ids(self, ids: np.ndarray):
        self.domain_ids = np.asarray(ids, dtype=np.int64)

    def embed_db(self, db_vec: np.ndarray) -> Tensor:
        """DB count vector [B, 6*|D|] -> [B, |D|, d].

        Each domain contributes one row: its count-bin embedding plus the
        domain's own source-token embedding, layer-normalized together.
        """
        B = db_vec.shape[0]
        D = self.ontology.n_domains
        bins = db_vec.reshape(B, D, N_BINS).argmax(axis=-1).astype(np.int64)
        bin_emb = T.embed(self.db_bins, bins)  # [B, D, d]
        dom = T.embed(self.encoder.e_src, np.broadcast_to(self.domain_ids, (B, D)))
        return self.encoder.norm_flat(self.ctx.drop(T.add(bin_emb, dom)))

    def forward(
        self,
        res_in: np.ndarray,
        res_mask: np.ndarray,
        z_ctx,
        ctx_mask,
        z_utt,
        utt_mask,
        z_state,
        state_mask,
        z_db,
        trace=None,
    ):
        """Token logits [B, L, |V|] and act probabilities [B, |A|].

        res_in [B, L] holds the begin-shifted response ids; res_mask [B, L]
        marks real positions. State features arrive either as fused
        tracker rows or as an encoded state sequence; ``state_mask``
        flags the attendable rows of whichever was given.
        """
        if z_state is None:
            raise ShapeError("generator needs state features (fused rows or an encoded state)")
        B, L = res_in.shape
        d = self.cfg.d
        z_res = self.encoder.encode(res_in, side="res")  # [B, L, d]
        act = T.expand(T.reshape(self.act_latent, (1, 1, d)), (B, 1, d))
        z = T.concat([act, z_res], 1)  # [B, L+1, d]

        n = L + 1
        causal = np.tril(np.ones((n, n), dtype=bool))
        key_alive = np.concatenate([np.ones((B, 1), dtype=bool), res_mask.astype(bool)], axis=1)
        self_mask = causal[None, :, :] & key_alive[:, None, :]

        def key_mask(m):
            return np.asarray(m, dtype=bool)[:, None, :]

        sources = [
            ("ctx", z_ctx, key_mask(ctx_mask)),
            ("utt", z_utt, key_mask(utt_mask)),
            ("state", z_state, key_mask(state_mask)),
            ("db", z_db, None),
        ]
        level_trace = [] if trace is not None else None
        for block in self.blocks:
            block_trace = [] if trace is not None else None
            z, w = block["self"](z, z, self_mask)
            if block_trace is not None:
                block_trace.append({"name": "self", "weights": w.data})
            for name, kv, m in sources:
                z, w = block[name](kv, z, m)
                if block_trace is not None:
                    block_trace.append({"name": name, "weights": w.data})
            if level_trace is not None:
                level_trace.append(block_trace)
        if trace is not None:
            trace["generator"] = level_trace

        z_act = T.reshape(T.narrow(z, 1, 0, 1), (B, d))
        act_probs = T.sigmoid(T.matmul(z_act, self.w_act))  # [B, |A|]
        z_tok = T.narrow(z, 1, 1, L)
        logits = T.matmul(T.reshape(z_tok, (B * L, d)), self.w_gen)
        return T.reshape(logits, (B, L, len(self.vocab))), act_probs

    def loss(self, logits, act_probs, res_tgt: np.ndarray, act_labels: np.ndarray):
        """L_gen = label-smoothed response CE + act BCE (unit weights)."""
        B, L, V = logits.shape
        l_res = T.cross_entropy_smoothed(
            T.reshape(logits, (B * L, V)),
            res_tgt.reshape(-1),
            smoothing=self.cfg.label_smoothing,
            pad_index=PAD_ID,
        )
        out = {"res": l_res}
        if self.cfg.use_act_loss:
            l_act = T.binary_cross_entropy(act_probs, act_labels)
            out["act"] = l_act
            out["gen"] = T.add(l_res, l_act)
        else:
            out["gen"] = l_res
        return out

    def predict_acts(self, act_probs: np.ndarray, threshold: float = None) -> list:
        """Act labels whose probability clears the threshold, per row."""
        thr = self.cfg.act_threshold if threshold is None else threshold
        out = []
        for row in np.atleast_2d(act_probs):
            out.append([self.ontology.acts[i] for i in range(len(row)) if row[i] >= thr])
        return out
