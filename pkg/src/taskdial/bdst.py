"""Bi-level dialogue state tracker.

Slot-level and domain-level attention stacks run in parallel over shared
encodings of the context, the user utterance, and the previous state
(slot level only). Their outputs fuse by broadcast Hadamard product into
a domain x slot feature grid, masked to the valid pairs, which feeds a
recurrent value decoder per inform pair and a sigmoid request head per
request pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import EOS_ID, PAD_ID, VAL_ID, Vocab
from .encoder import Encoder
from .errors import ShapeError
from .nn import GRUCell, Linear, MultiHeadAttention, NetContext
from .ontology import NONE_VALUE, DialogueState, Ontology
from .tensor import Tensor


@dataclass
class DstConfig:
    n_slot_blocks: int = 3
    n_domain_blocks: int = 3
    n_heads: int = 8
    d: int = 256
    d_rnn: int = 256
    max_value_len: int = 10
    request_threshold: float = 0.5


class BDST:
    """State tracker over the full domain x slot grid."""

    def __init__(self, ctx: NetContext, encoder: Encoder, ontology: Ontology, src_vocab: Vocab, cfg: DstConfig):
        self.ctx = ctx
        self.encoder = encoder
        self.ontology = ontology
        self.vocab = src_vocab
        self.cfg = cfg
        d, h = cfg.d, cfg.n_heads

        self.slot_blocks = [
            {
                "self": MultiHeadAttention(ctx, f"dst.slot{b}.self", d, h),
                "ctx": MultiHeadAttention(ctx, f"dst.slot{b}.ctx", d, h),
                "state": MultiHeadAttention(ctx, f"dst.slot{b}.state", d, h),
                "utt": MultiHeadAttention(ctx, f"dst.slot{b}.utt", d, h),
            }
            for b in range(cfg.n_slot_blocks)
        ]
        self.domain_blocks = [
            {
                "self": MultiHeadAttention(ctx, f"dst.dom{b}.self", d, h),
                "ctx": MultiHeadAttention(ctx, f"dst.dom{b}.ctx", d, h),
                "utt": MultiHeadAttention(ctx, f"dst.dom{b}.utt", d, h),
            }
            for b in range(cfg.n_domain_blocks)
        ]
        self.fuse_att = MultiHeadAttention(ctx, "dst.fuse.self", d, h)
        self.h0_proj = Linear(ctx, "dst.h0", d, cfg.d_rnn)
        self.gru = GRUCell(ctx, "dst.gru", d, cfg.d_rnn)
        self.w_inf = ctx.store.uniform("dst.w_inf", (cfg.d_rnn, len(src_vocab)), fan_in=cfg.d_rnn)
        self.w_req = ctx.store.uniform("dst.w_req", (d, 1), fan_in=d)

        D, S = ontology.n_domains, ontology.n_slots
        self.valid_mask = ontology.pair_mask()  # [D, S] bool
        self.valid_flat = self.valid_mask.reshape(-1)
        self.inform_flat = np.array(
            [ontology.domain_index(dd) * S + ontology.slot_index(ss) for dd, ss in ontology.inform_pairs],
            dtype=np.int64,
        )
        self.request_flat = np.array(
            [ontology.domain_index(dd) * S + ontology.slot_index(ss) for dd, ss in ontology.request_pairs],
            dtype=np.int64,
        )
        self.slot_ids = np.array([src_vocab.index(s.name) for s in ontology.slots], dtype=np.int64)
        self.domain_ids = np.array([src_vocab.index(dd) for dd in ontology.domains], dtype=np.int64)
        self._fuse_mask = np.outer(self.valid_flat, self.valid_flat)[None, :, :]

    # -- attention stacks -------------------------------------------------------

    @staticmethod
    def _key_mask(m):
        return np.asarray(m, dtype=bool)[:, None, :]  # [B, 1, Lk], shared by queries

    def _run_stack(self, z, blocks, sources, trace, level_name):
        level_trace = [] if trace is not None else None
        for block in blocks:
            block_trace = [] if trace is not None else None
            # self-attention keys are the evolving stream itself
            for stage_name, kv, m in [("self", None, None)] + sources:
                kv = z if stage_name == "self" else kv
                z, w = block[stage_name](kv, z, m)
                if block_trace is not None:
                    block_trace.append({"name": stage_name, "weights": w.data})
            if level_trace is not None:
                level_trace.append(block_trace)
        if trace is not None:
            trace[level_name] = level_trace
        return z

    def slot_level(self, z_s, z_ctx, ctx_mask, z_utt, utt_mask, z_prev, prev_mask, trace=None):
        """[B, S, d] slot features; each block chains self, ctx, state, utt."""
        sources = [
            ("ctx", z_ctx, self._key_mask(ctx_mask)),
            ("state", z_prev, self._key_mask(prev_mask)),
            ("utt", z_utt, self._key_mask(utt_mask)),
        ]
        return self._run_stack(z_s, self.slot_blocks, sources, trace, "slot")

    def domain_level(self, z_d, z_ctx, ctx_mask, z_utt, utt_mask, trace=None):
        """[B, D, d] domain features; each block chains self, ctx, utt."""
        sources = [
            ("ctx", z_ctx, self._key_mask(ctx_mask)),
            ("utt", z_utt, self._key_mask(utt_mask)),
        ]
        return self._run_stack(z_d, self.domain_blocks, sources, trace, "domain")

    def fuse(self, z_dom, z_slot, trace=None):
        """Hadamard-fused grid with masked self-attention, [B, D*S, d].

        Invalid (domain, slot) positions are zeroed before the attention,
        excluded from its queries and keys, and zeroed again after, so
        they are exactly zero in the result.
        """
        B, d = z_dom.shape[0], self.cfg.d
        D, S = self.ontology.n_domains, self.ontology.n_slots
        joint = T.mul(
            T.reshape(z_dom, (B, D, 1, d)),
            T.reshape(z_slot, (B, 1, S, d)),
        )
        grid_mask = Tensor(self.valid_mask.astype(joint.dtype)[None, :, :, None])
        joint = T.mul(joint, grid_mask)
        flat = T.reshape(joint, (B, D * S, d))
        fused, w = self.fuse_att(flat, flat, self._fuse_mask)
        fused = T.mul(fused, Tensor(self.valid_flat.astype(fused.dtype)[None, :, None]))
        if trace is not None:
            trace["fuse"] = [[{"name": "self", "weights": w.data}]]
        return fused

    def forward(self, z_ctx, ctx_mask, z_utt, utt_mask, z_prev, prev_mask, trace=None):
        """Fused state features [B, D*S, d]; invalid pairs exactly zero.

        ``*_mask`` are [B, L] key-validity bools. ``trace`` collects
        attention weights per level/block/stage when given a dict.
        """
        B = z_ctx.shape[0]
        z_s = self.encoder.encode_flat(np.broadcast_to(self.slot_ids, (B, len(self.slot_ids))))
        z_d = self.encoder.encode_flat(np.broadcast_to(self.domain_ids, (B, len(self.domain_ids))))
        z_slot = self.slot_level(z_s, z_ctx, ctx_mask, z_utt, utt_mask, z_prev, prev_mask, trace)
        z_dom = self.domain_level(z_d, z_ctx, ctx_mask, z_utt, utt_mask, trace)
        return self.fuse(z_dom, z_slot, trace)

    # -- heads -------------------------------------------------------------------

    def inform_features(self, fused) -> Tensor:
        """[B, P, d] rows of the fused grid at the inform pairs."""
        return T.index_select(fused, 1, self.inform_flat)

    def request_probs(self, fused) -> Tensor:
        """[B, R] request probabilities."""
        z = T.index_select(fused, 1, self.request_flat)
        B, R, d = z.shape
        logits = T.matmul(T.reshape(z, (B * R, d)), self.w_req)
        return T.sigmoid(T.reshape(logits, (B, R)))

    def value_logits(self, fused, value_in: np.ndarray) -> Tensor:
        """Teacher-forced value decoding.

        value_in [B, P, Tv] holds the begin-shifted gold value tokens for
        every inform pair. Returns logits [B*P*Tv, |V|].
        """
        B, P, Tv = value_in.shape
        if P != len(self.inform_flat):
            raise ShapeError(f"value rows {P} != inform pairs {len(self.inform_flat)}")
        feats = self.inform_features(fused)  # [B, P, d]
        h = T.reshape(self.h0_proj(feats), (B * P, self.cfg.d_rnn))
        x = T.reshape(T.embed(self.encoder.e_src, value_in), (B * P, Tv, self.cfg.d))
        steps = []
        for t in range(Tv):
            xt = T.reshape(T.narrow(x, 1, t, 1), (B * P, self.cfg.d))
            h = self.gru(xt, h)
            steps.append(h)
        hs = T.concat([T.reshape(s, (B * P, 1, self.cfg.d_rnn)) for s in steps], 1)
        return T.matmul(T.reshape(hs, (B * P * Tv, self.cfg.d_rnn)), self.w_inf)

    def loss(self, fused, value_in, value_tgt, req_labels):
        """L_dst = L_inf + L_req (plain CE over values, BCE over requests)."""
        logits = self.value_logits(fused, value_in)
        l_inf = T.cross_entropy_smoothed(logits, value_tgt.reshape(-1), smoothing=0.0, pad_index=PAD_ID)
        probs = self.request_probs(fused)
        l_req = T.binary_cross_entropy(probs, req_labels)
        return {"inf": l_inf, "req": l_req, "dst": T.add(l_inf, l_req)}

    # -- inference ----------------------------------------------------------------

    def decode_values(self, fused) -> np.ndarray:
        """Greedy value decode for every inform pair.

        Returns ids [B, P, max_value_len]; positions after the end token
        are padded.
        """
        B = fused.shape[0]
        P = len(self.inform_flat)
        with T.no_grad():
            feats = self.inform_features(fused)
            h = T.reshape(self.h0_proj(feats), (B * P, self.cfg.d_rnn))
            tok = np.full(B * P, VAL_ID, dtype=np.int64)
            done = np.zeros(B * P, dtype=bool)
            out = np.full((B * P, self.cfg.max_value_len), PAD_ID, dtype=np.int64)
            for t in range(self.cfg.max_value_len):
                x = T.embed(self.encoder.e_src, tok)
                h = self.gru(x, h)
                logits = T.matmul(h, self.w_inf)
                tok = logits.data.argmax(axis=-1).astype(np.int64)
                out[:, t] = np.where(done, PAD_ID, tok)
                done |= tok == EOS_ID
                if done.all():
                    break
        return out.reshape(B, P, self.cfg.max_value_len)

    def states_from_outputs(self, value_ids: np.ndarray, req_probs: np.ndarray) -> list:
        """Assemble a valid DialogueState per batch element."""
        B = value_ids.shape[0]
        states = []
        for b in range(B):
            state = DialogueState()
            for p, (dd, ss) in enumerate(self.ontology.inform_pairs):
                toks = []
                for i in value_ids[b, p]:
                    if i in (EOS_ID, PAD_ID):
                        break
                    toks.append(self.vocab.token(int(i)))
                # a pure run of the none symbol means "slot absent"
                if toks and set(toks) != {NONE_VALUE}:
                    state.set_inform(dd, ss, toks)
            for r, (dd, ss) in enumerate(self.ontology.request_pairs):
                if req_probs[b, r] >= self.cfg.request_threshold:
                    state.add_request(dd, ss)
            state.validate(self.ontology)
            states.append(state)
        return states
