"""Full dialogue model: shared encoder, state tracker, and generator.

Three task modes share the same parameter set. "dst" trains only the
tracker; "c2t" trains only the generator, attending an encoding of the
gold current state; "e2e" trains both, with the generator attending the
tracker's fused features. Teacher forcing supplies gold previous states,
gold DB vectors, and gold response prefixes during training.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .bdst import BDST, DstConfig
from .corpus import BLANK, BOS_ID, EOS_ID, PAD_ID, VAL_ID, Vocab, make_context
from .darg import DARG, GenConfig
from .encoder import Encoder, shift_target
from .errors import ConfigError
from .kb import KB
from .nn import NetContext, ParamStore
from .ontology import Ontology, serialize_state
from .tensor import Tensor

MODES = ("dst", "c2t", "e2e")


@dataclass
class ModelConfig:
    mode: str = "e2e"
    d: int = 256
    n_heads: int = 8
    n_slot_blocks: int = 3
    n_domain_blocks: int = 3
    n_gen_blocks: int = 3
    d_rnn: int = 0  # 0 means "same as d"
    dropout: float = 0.3
    label_smoothing: float = 0.1
    max_value_len: int = 10
    max_res_len: int = 60
    max_positions: int = 512
    context_mode: str = "last-response"
    beam_size: int = 5
    length_norm: float = 0.6
    act_threshold: float = 0.5
    request_threshold: float = 0.5
    use_act_loss: bool = True
    seed: int = 13

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.context_mode not in ("last-response", "full-history"):
            raise ConfigError(f"unknown context mode {self.context_mode!r}")
        if self.d % self.n_heads != 0:
            raise ConfigError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.beam_size < 1:
            raise ConfigError("beam size must be >= 1")

    @property
    def rnn_width(self) -> int:
        return self.d_rnn or self.d

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class DialogueModel:
    """One parameter store wiring the encoder, tracker, and generator."""

    def __init__(self, cfg: ModelConfig, ontology: Ontology, src_vocab: Vocab, res_vocab: Vocab):
        self.cfg = cfg
        self.ontology = ontology
        self.src_vocab = src_vocab
        self.res_vocab = res_vocab
        self.store = ParamStore(cfg.seed)
        self.net = NetContext(self.store, dropout=cfg.dropout)
        self.encoder = Encoder(self.net, cfg.d, len(src_vocab), len(res_vocab), cfg.max_positions)
        self.bdst = BDST(
            self.net,
            self.encoder,
            ontology,
            src_vocab,
            DstConfig(
                n_slot_blocks=cfg.n_slot_blocks,
                n_domain_blocks=cfg.n_domain_blocks,
                n_heads=cfg.n_heads,
                d=cfg.d,
                d_rnn=cfg.rnn_width,
                max_value_len=cfg.max_value_len,
                request_threshold=cfg.request_threshold,
            ),
        )
        self.darg = DARG(
            self.net,
            self.encoder,
            ontology,
            res_vocab,
            GenConfig(
                n_blocks=cfg.n_gen_blocks,
                n_heads=cfg.n_heads,
                d=cfg.d,
                max_res_len=cfg.max_res_len,
                beam_size=cfg.beam_size,
                length_norm=cfg.length_norm,
                act_threshold=cfg.act_threshold,
                use_act_loss=cfg.use_act_loss,
                label_smoothing=cfg.label_smoothing,
            ),
        )
        self.darg.set_domain_ids(self.bdst.domain_ids)

    def train_mode(self):
        self.net.training = True

    def eval_mode(self):
        self.net.training = False

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "config": self.cfg.to_dict(),
                "ontology": self.ontology.to_dict(),
                "src_vocab": self.src_vocab.to_list(),
                "res_vocab": self.res_vocab.to_list(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    # -- shared encodings -------------------------------------------------------

    def encode_sources(self, batch: dict):
        z_ctx = self.encoder.encode(batch["ctx"])
        z_utt = self.encoder.encode(batch["utt"])
        z_prev = self.encoder.encode(batch["prev_st"])
        return z_ctx, z_utt, z_prev

    def state_features(self, batch: dict, fused):
        """Generator-side state keys: fused rows (e2e) or encoded gold state."""
        if self.cfg.mode == "c2t":
            z = self.encoder.encode(batch["curr_st"])
            return z, batch["curr_st_mask"]
        B = batch["ctx"].shape[0]
        mask = np.broadcast_to(self.bdst.valid_flat, (B, self.bdst.valid_flat.size))
        return fused, mask

    # -- training forward --------------------------------------------------------

    def forward_train(self, batch: dict, trace=None):
        """All mode-appropriate losses as graph tensors plus a total."""
        z_ctx, z_utt, z_prev = self.encode_sources(batch)
        losses = {}
        fused = None
        if self.cfg.mode in ("dst", "e2e"):
            fused = self.bdst.forward(
                z_ctx, batch["ctx_mask"], z_utt, batch["utt_mask"], z_prev, batch["prev_st_mask"], trace
            )
            losses.update(self.bdst.loss(fused, batch["value_in"], batch["value_tgt"], batch["req_labels"]))
        if self.cfg.mode in ("c2t", "e2e"):
            z_state, state_mask = self.state_features(batch, fused)
            z_db = self.darg.embed_db(batch["db"])
            logits, act_probs = self.darg.forward(
                batch["res_in"], batch["res_mask"], z_ctx, batch["ctx_mask"],
                z_utt, batch["utt_mask"], z_state, state_mask, z_db, trace,
            )
            losses.update(self.darg.loss(logits, act_probs, batch["res_tgt"], batch["acts"]))
            losses["act_probs"] = act_probs
        if self.cfg.mode == "dst":
            losses["total"] = losses["dst"]
        elif self.cfg.mode == "c2t":
            losses["total"] = losses["gen"]
        else:
            losses["total"] = T.add(losses["dst"], losses["gen"])
        return losses

    # -- tracking-only forward (inference path) -----------------------------------

    def track(self, batch: dict, trace=None):
        """Predicted states for a batch; returns (states, fused, req_probs, values)."""
        z_ctx, z_utt, z_prev = self.encode_sources(batch)
        fused = self.bdst.forward(
            z_ctx, batch["ctx_mask"], z_utt, batch["utt_mask"], z_prev, batch["prev_st_mask"], trace
        )
        with T.no_grad():
            req_probs = self.bdst.request_probs(fused).data
        value_ids = self.bdst.decode_values(fused)
        states = self.bdst.states_from_outputs(value_ids, req_probs)
        return states, fused, req_probs, value_ids


# -- batch assembly ----------------------------------------------------------------


def _pad_ids(rows, pad=PAD_ID):
    width = max(1, max((len(r) for r in rows), default=1))
    out = np.full((len(rows), width), pad, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def collate_turns(turns, ontology: Ontology, src_vocab: Vocab, res_vocab: Vocab, kb: KB, cfg: ModelConfig, provenance: str = "gold") -> dict:
    """Pack turns into padded id arrays with masks and gold targets.

    Teacher forcing throughout: the previous state is the gold one, the
    DB vector comes from the gold current state, and the response input
    is the begin-shifted gold response. The provenance tag says where the
    turn inputs came from; the trainer refuses anything but "gold".
    """
    ctx_rows, utt_rows, prev_rows, curr_rows = [], [], [], []
    db_rows, req_rows, act_rows = [], [], []
    value_in_rows, value_tgt_rows = [], []
    res_in_rows, res_tgt_rows = [], []
    P = len(ontology.inform_pairs)
    max_v = cfg.max_value_len

    for turn in turns:
        ctx_rows.append(src_vocab.encode(make_context(turn, cfg.context_mode)))
        utt_rows.append(src_vocab.encode(turn.user or [BLANK]))
        prev_tokens = serialize_state(turn.prev_state, ontology) or [BLANK]
        prev_rows.append(src_vocab.encode(prev_tokens))
        curr_tokens = serialize_state(turn.gold_state, ontology) or [BLANK]
        curr_rows.append(src_vocab.encode(curr_tokens))
        db_rows.append(kb.db_vector(turn.gold_state))

        vin = np.full((P, max_v), PAD_ID, dtype=np.int64)
        vtgt = np.full((P, max_v), PAD_ID, dtype=np.int64)
        for p, (dd, ss) in enumerate(ontology.inform_pairs):
            toks = list(turn.gold_state.value(dd, ss))[: max_v - 1]
            ids = src_vocab.encode(toks)
            vin[p, 0] = VAL_ID
            vin[p, 1 : 1 + len(ids)] = ids
            vtgt[p, : len(ids)] = ids
            vtgt[p, len(ids)] = EOS_ID
        value_in_rows.append(vin)
        value_tgt_rows.append(vtgt)

        req = np.zeros(len(ontology.request_pairs), dtype=np.float32)
        for r, (dd, ss) in enumerate(ontology.request_pairs):
            if ss in turn.gold_state.request.get(dd, set()):
                req[r] = 1.0
        req_rows.append(req)
        act_rows.append(turn.act_vector(ontology))

        res_ids = [BOS_ID] + list(res_vocab.encode(turn.response[: cfg.max_res_len - 2])) + [EOS_ID]
        rin, rtgt = shift_target(np.asarray(res_ids, dtype=np.int64))
        res_in_rows.append(rin)
        res_tgt_rows.append(rtgt)

    ctx = _pad_ids(ctx_rows)
    utt = _pad_ids(utt_rows)
    prev = _pad_ids(prev_rows)
    curr = _pad_ids(curr_rows)
    res_in = _pad_ids(res_in_rows)
    res_tgt = _pad_ids(res_tgt_rows)
    # value rows: trim the shared width to the longest used column
    v_in = np.stack(value_in_rows)
    v_tgt = np.stack(value_tgt_rows)
    used = max(1, int((v_tgt != PAD_ID).any(axis=(0, 1)).nonzero()[0].max()) + 1)
    return {
        "provenance": provenance,
        "ctx": ctx,
        "ctx_mask": ctx != PAD_ID,
        "utt": utt,
        "utt_mask": utt != PAD_ID,
        "prev_st": prev,
        "prev_st_mask": prev != PAD_ID,
        "curr_st": curr,
        "curr_st_mask": curr != PAD_ID,
        "db": np.stack(db_rows).astype(np.float32),
        "value_in": v_in[:, :, :used],
        "value_tgt": v_tgt[:, :, :used],
        "req_labels": np.stack(req_rows),
        "acts": np.stack(act_rows),
        "res_in": res_in,
        "res_mask": res_in != PAD_ID,
        "res_tgt": res_tgt,
    }
