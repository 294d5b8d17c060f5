"""Turn-by-turn decoding: state tracking, DB requery, beam search, chat sessions.

The inference loop threads the model's own predicted state from turn to
turn: the serialized input state at turn t is exactly the decoded state
of turn t-1. The DB vector is recomputed from the newly predicted state
before response generation. Responses decode with batched beam search
(score = log probability / length^alpha) and are lexicalized against
the entity tables for display only.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import BLANK, BOS_ID, EOS_ID, PAD_ID, DialogueTurn, make_context, tokenize
from .kb import KB, N_BINS
from .model import DialogueModel, _pad_ids
from .ontology import DialogueState, serialize_state
from .tensor import Tensor


@dataclass
class BeamHypothesis:
    """One decode candidate: generated ids (no begin token), log p, end flag."""

    tokens: list
    logprob: float
    finished: bool

    def score(self, alpha: float) -> float:
        return self.logprob / max(len(self.tokens), 1) ** alpha


def beam_search(step_fn, n_items: int, beam_size: int, max_len: int,
                length_norm: float, eos_id: int = EOS_ID) -> list:
    """Batched beam search over ``n_items`` independent decodes.

    step_fn(prefixes [N, L]) must return next-token log probabilities
    [N, V] for N = n_items * beam_size rows, row i*beam_size + k being
    item i's k-th hypothesis. Every returned hypothesis either ends with
    the end token (finished=True) or was cut at max_len (finished=False).
    Beam size 1 reduces to greedy decoding.
    """
    B, K = n_items, beam_size
    prefixes = np.full((B * K, 1), BOS_ID, dtype=np.int64)
    logprobs = np.full((B, K), -np.inf)
    logprobs[:, 0] = 0.0  # only one live hypothesis before the first step
    finished = np.zeros((B, K), dtype=bool)
    lengths = np.zeros((B, K), dtype=np.int64)  # generated tokens incl. end token

    for t in range(max_len):
        if finished.all():
            break
        lp = np.asarray(step_fn(prefixes), dtype=np.float64)  # [B*K, V]
        V = lp.shape[1]
        lp = lp.reshape(B, K, V)
        # finished rows may only extend with PAD at no cost, keeping their score
        fin_rows = np.where(finished)
        lp[fin_rows[0], fin_rows[1], :] = -np.inf
        lp[fin_rows[0], fin_rows[1], PAD_ID] = 0.0

        cand = logprobs[:, :, None] + lp  # [B, K, V]
        # candidate length: frozen for finished sources, grown for live ones
        cand_len = np.where(finished, lengths, t + 1)  # [B, K]
        scores = cand / np.maximum(cand_len, 1)[:, :, None] ** length_norm
        flat = scores.reshape(B, K * V)
        top = np.argsort(-flat, axis=1, kind="stable")[:, :K]  # [B, K]
        src_beam = top // V
        tok = top % V

        new_prefixes = np.empty((B * K, prefixes.shape[1] + 1), dtype=np.int64)
        new_logprobs = np.empty((B, K))
        new_finished = np.empty((B, K), dtype=bool)
        new_lengths = np.empty((B, K), dtype=np.int64)
        old = prefixes.reshape(B, K, -1)
        for b in range(B):
            for k in range(K):
                s, v = src_beam[b, k], tok[b, k]
                new_prefixes[b * K + k, :-1] = old[b, s]
                new_prefixes[b * K + k, -1] = v
                new_logprobs[b, k] = cand[b, s, v]
                new_finished[b, k] = finished[b, s] or v == eos_id
                new_lengths[b, k] = cand_len[b, s]
        prefixes, logprobs, finished, lengths = new_prefixes, new_logprobs, new_finished, new_lengths

    out = []
    seqs = prefixes.reshape(B, K, -1)
    for b in range(B):
        hyps = []
        for k in range(K):
            toks = [int(x) for x in seqs[b, k, 1:] if x != PAD_ID]
            hyps.append(BeamHypothesis(toks, float(logprobs[b, k]), bool(finished[b, k])))
        hyps.sort(key=lambda h: -h.score(length_norm))
        out.append(hyps[0])
    return out


# -- generation over a prepared batch ------------------------------------------------


def decode_responses(model: DialogueModel, ctx_ids, utt_ids, state_feats, state_mask,
                     db_vecs, beam_size: int = None, max_len: int = None):
    """Beam-decode delex responses; returns (hypotheses, act_probs [B, |A|]).

    state_feats/state_mask are plain arrays (fused tracker rows or an
    encoded gold state); everything is expanded beam_size times so one
    forward drives all hypotheses of all items.
    """
    K = beam_size or model.cfg.beam_size
    max_len = max_len or model.cfg.max_res_len
    B = ctx_ids.shape[0]

    with T.no_grad():
        rep = lambda a: np.repeat(np.asarray(a), K, axis=0)
        ctx_r, utt_r = rep(ctx_ids), rep(utt_ids)
        z_ctx = model.encoder.encode(ctx_r)
        z_utt = model.encoder.encode(utt_r)
        ctx_mask = ctx_r != PAD_ID
        utt_mask = utt_r != PAD_ID
        z_state = Tensor(rep(state_feats))
        st_mask = rep(state_mask)
        z_db = model.darg.embed_db(rep(np.asarray(db_vecs, dtype=np.float32)))

        def forward(prefixes):
            res_mask = prefixes != PAD_ID
            return model.darg.forward(
                prefixes, res_mask, z_ctx, ctx_mask, z_utt, utt_mask, z_state, st_mask, z_db
            )

        # act probabilities are independent of the response prefix, so one
        # begin-token forward fixes them for the whole decode
        _, act_probs = forward(np.full((B * K, 1), BOS_ID, dtype=np.int64))
        acts = act_probs.data[::K].copy()

        def step_fn(prefixes):
            logits, _ = forward(prefixes)
            n, L, V = logits.shape
            last = T.reshape(T.narrow(logits, 1, L - 1, 1), (n, V))
            return T.log_softmax_rows(last).data

        hyps = beam_search(step_fn, B, K, max_len, model.cfg.length_norm)
    return hyps, acts


# -- lexicalization -------------------------------------------------------------------


def _match_rows(kb: KB, domain: str, state: DialogueState):
    if not kb.has_db(domain):
        return []
    columns = kb.table(domain).columns
    rows = kb.query_state(state, domain)
    return sorted(rows, key=lambda r: tuple(str(r.get(c, "")) for c in columns))


def lexicalize(delex_tokens: list, state: DialogueState, kb: KB, last_utterance=None) -> str:
    """Replace domain_slot tags with entity attributes for display.

    Per tag: the stably-first DB row matching the state's constraints for
    the tag's domain supplies the value; failing that, the state's own
    value for that slot; failing that, a visible "[slot]" placeholder.
    All tags of one domain draw from the same row, so a response offers
    one coherent entity.
    """
    row_cache: dict = {}
    out = []
    for tok in delex_tokens:
        dom, _, col = tok.partition("_")
        if not col or not kb.ontology.is_domain(dom):
            out.append(tok)
            continue
        if dom not in row_cache:
            rows = _match_rows(kb, dom, state)
            row_cache[dom] = rows[0] if rows else None
        row = row_cache[dom]
        if row is not None and row.get(col, "") != "":
            out.append(str(row[col]))
            continue
        fallback = None
        for slot_name, value in state.inform.get(dom, {}).items():
            if kb.ontology.slot(slot_name).key == col:
                fallback = " ".join(value)
                break
        out.append(fallback if fallback else f"[{col}]")
    return " ".join(out)


# -- sessions -------------------------------------------------------------------------


@dataclass
class TurnRecord:
    """Everything one exchange produced, for transcripts and the UI."""

    turn_index: int
    user: list
    state: DialogueState
    acts: list  # [(label, probability)]
    response_delex: list
    response: str
    db_counts: dict  # domain -> matching row count
    truncated: bool = False
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "user": " ".join(self.user),
            "state": self.state.to_dict(),
            "acts": [{"label": a, "probability": round(float(p), 6)} for a, p in self.acts],
            "response_delex": " ".join(self.response_delex),
            "response": self.response,
            "db_counts": self.db_counts,
            "truncated": self.truncated,
        }


class Session:
    """One chat: serialized turns threading the predicted state forward."""

    def __init__(self, model: DialogueModel, kb: KB, session_id: str = None, max_turns: int = 40):
        self.model = model
        self.kb = kb
        self.id = session_id or uuid.uuid4().hex[:12]
        self.max_turns = max_turns
        self.state = DialogueState()
        self.history = []  # [(speaker, tokens)]
        self.prev_response = []  # previous delex system tokens
        self.transcript = []

    def _context_turn(self, utt_tokens) -> DialogueTurn:
        return DialogueTurn(
            self.id, len(self.transcript) + 1, utt_tokens, list(self.prev_response),
            [(s, list(t)) for s, t in self.history], self.state, self.state, [], [], [], {},
        )

    def step_turn(self, user_text: str, gold_state: DialogueState = None) -> TurnRecord:
        """Track the new state, requery the DB, and decode a response."""
        if len(self.transcript) >= self.max_turns:
            raise RuntimeError(f"session {self.id} exceeded {self.max_turns} turns")
        model, kb = self.model, self.kb
        utt = tokenize(user_text) or [BLANK]
        ctx_tokens = make_context(self._context_turn(utt), model.cfg.context_mode)
        ctx_ids = _pad_ids([model.src_vocab.encode(ctx_tokens)])
        utt_ids = _pad_ids([model.src_vocab.encode(utt)])
        prev_tokens = serialize_state(self.state, model.ontology) or [BLANK]
        prev_ids = _pad_ids([model.src_vocab.encode(prev_tokens)])
        batch = {
            "provenance": "predicted",
            "ctx": ctx_ids, "ctx_mask": ctx_ids != PAD_ID,
            "utt": utt_ids, "utt_mask": utt_ids != PAD_ID,
            "prev_st": prev_ids, "prev_st_mask": prev_ids != PAD_ID,
        }

        trace = {"tokens": {"ctx": ctx_tokens, "utt": utt, "prev_state": prev_tokens}}
        if model.cfg.mode == "c2t":
            if gold_state is None:
                raise ValueError("context-to-text sessions need the gold current state per turn")
            new_state, fused = gold_state.copy(), None
        else:
            states, fused, req_probs, _ = model.track(batch, trace=trace)
            new_state = states[0]

        db_vec = kb.db_vector(new_state)[None, :]
        db_counts = {
            d: len(kb.query_state(new_state, d)) if kb.has_db(d) else 0
            for d in model.ontology.domains
        }
        acts, delex, truncated = [], [], False
        response = ""
        if model.cfg.mode in ("c2t", "e2e"):
            if model.cfg.mode == "c2t":
                st_tokens = serialize_state(new_state, model.ontology) or [BLANK]
                st_ids = _pad_ids([model.src_vocab.encode(st_tokens)])
                with T.no_grad():
                    state_feats = model.encoder.encode(st_ids).data
                state_mask = st_ids != PAD_ID
                trace["tokens"]["state"] = st_tokens
            else:
                state_feats = fused.data
                state_mask = np.broadcast_to(model.bdst.valid_flat, (1, model.bdst.valid_flat.size))
                trace["tokens"]["state"] = [f"{d}.{s.name}" for d in model.ontology.domains for s in model.ontology.slots]
            hyps, act_probs = decode_responses(model, ctx_ids, utt_ids, state_feats, state_mask, db_vec)
            hyp = hyps[0]
            truncated = not hyp.finished
            delex = [model.res_vocab.token(i) for i in hyp.tokens if i != EOS_ID]
            acts = [(a, float(p)) for a, p in zip(model.ontology.acts, act_probs[0])]
            response = lexicalize(delex, new_state, kb, utt)
            # traced teacher-forced pass over the decoded tokens, for inspection
            res_in = np.asarray([[BOS_ID] + [i for i in hyp.tokens if i != EOS_ID]], dtype=np.int64)
            with T.no_grad():
                model.darg.forward(
                    res_in, res_in != PAD_ID,
                    model.encoder.encode(ctx_ids), ctx_ids != PAD_ID,
                    model.encoder.encode(utt_ids), utt_ids != PAD_ID,
                    Tensor(state_feats), state_mask,
                    model.darg.embed_db(db_vec.astype(np.float32)), trace=trace,
                )
            trace["tokens"]["response"] = ["<act>", "<bos>"] + delex

        record = TurnRecord(
            turn_index=len(self.transcript) + 1,
            user=utt,
            state=new_state.copy(),
            acts=acts,
            response_delex=delex,
            response=response,
            db_counts=db_counts,
            truncated=truncated,
            trace=trace,
        )
        # thread the state: next turn's serialized input is this decision
        self.state = new_state
        self.history.append(("usr", utt))
        self.history.append(("sys", list(delex)))
        self.prev_response = list(delex)
        self.transcript.append(record)
        return record

    def export_transcript(self) -> list:
        return [r.to_dict() for r in self.transcript]


_STAGE_KEY_TOKENS = {"ctx": "ctx", "utt": "utt", "state": "prev_state", "db": None}


def export_trace(session: Session, turn_index: int) -> dict:
    """Attention bundle for one turn: per level / block / stage weights.

    Weights are [heads, queries, keys]; each stage carries its own query
    and key token labels so a client can render heatmaps directly.
    """
    if turn_index < 1 or turn_index > len(session.transcript):
        raise IndexError(f"turn {turn_index} not in session (1..{len(session.transcript)})")
    record = session.transcript[turn_index - 1]
    trace = record.trace
    tokens = trace.get("tokens", {})
    onto = session.model.ontology
    query_labels = {
        "slot": [s.name for s in onto.slots],
        "domain": list(onto.domains),
        "fuse": [f"{d}.{s.name}" for d in onto.domains for s in onto.slots],
        "generator": tokens.get("response", []),
    }
    gen_state_tokens = tokens.get("state", [])
    out = {"turn_index": turn_index, "levels": {}}
    for level in ("slot", "domain", "fuse", "generator"):
        if level not in trace:
            continue
        blocks = []
        for block in trace[level]:
            stages = []
            for stage in block:
                name = stage["name"]
                w = stage["weights"]
                w = w[0] if w.ndim == 4 else w
                if name == "self":
                    keys = query_labels[level]
                elif name == "db":
                    keys = list(onto.domains)
                elif level == "generator" and name == "state":
                    keys = gen_state_tokens
                else:
                    keys = tokens.get(_STAGE_KEY_TOKENS.get(name, ""), [])
                stages.append({
                    "name": name,
                    "weights": [[[round(float(x), 6) for x in row] for row in head] for head in w],
                    "query_labels": query_labels[level],
                    "key_labels": list(keys),
                })
            blocks.append(stages)
        out["levels"][level] = blocks
    return out


# -- corpus replay for evaluation ----------------------------------------------------


@dataclass
class ReplayTurn:
    turn_index: int
    user: list
    gold_state: DialogueState
    pred_state: DialogueState
    gold_acts: list
    pred_acts: list
    response_gold: list
    response_pred: list


@dataclass
class DialogueRecord:
    dialogue_id: str
    goal: dict
    turns: list


def replay_corpus(model: DialogueModel, turns, kb: KB, decode: bool = None,
                  beam_size: int = None, progress=None) -> list:
    """Replay gold user turns, threading each dialogue's predicted state.

    Context and user utterances are the corpus's own (the standard
    corpus-based evaluation setting); only the dialogue state is carried
    over from the model's previous prediction. In context-to-text mode
    the gold current state substitutes for tracking. Dialogues advance
    in lockstep so every depth level runs as one batch.
    """
    mode = model.cfg.mode
    if decode is None:
        decode = mode in ("c2t", "e2e")
    track = mode in ("dst", "e2e")
    model.eval_mode()

    by_dialogue: dict = {}
    for t in turns:
        by_dialogue.setdefault(t.dialogue_id, []).append(t)
    for d in by_dialogue.values():
        d.sort(key=lambda t: t.turn_index)
    records = {
        did: DialogueRecord(did, d[0].goal, [None] * len(d)) for did, d in by_dialogue.items()
    }
    pred_prev = {did: DialogueState() for did in by_dialogue}

    max_depth = max(len(d) for d in by_dialogue.values()) if by_dialogue else 0
    for depth in range(max_depth):
        active = [(did, d[depth]) for did, d in by_dialogue.items() if depth < len(d)]
        active.sort(key=lambda x: x[0])
        ctx_ids = _pad_ids([model.src_vocab.encode(make_context(t, model.cfg.context_mode)) for _, t in active])
        utt_ids = _pad_ids([model.src_vocab.encode(t.user or [BLANK]) for _, t in active])

        if track:
            prev_ids = _pad_ids([
                model.src_vocab.encode(serialize_state(pred_prev[did], model.ontology) or [BLANK])
                for did, _ in active
            ])
            batch = {
                "provenance": "predicted",
                "ctx": ctx_ids, "ctx_mask": ctx_ids != PAD_ID,
                "utt": utt_ids, "utt_mask": utt_ids != PAD_ID,
                "prev_st": prev_ids, "prev_st_mask": prev_ids != PAD_ID,
            }
            states, fused, _, _ = model.track(batch)
        else:
            states = [t.gold_state.copy() for _, t in active]
            fused = None

        pred_acts = [[] for _ in active]
        pred_res = [[] for _ in active]
        if decode:
            if mode == "c2t":
                st_ids = _pad_ids([
                    model.src_vocab.encode(serialize_state(s, model.ontology) or [BLANK]) for s in states
                ])
                with T.no_grad():
                    state_feats = model.encoder.encode(st_ids).data
                state_mask = st_ids != PAD_ID
            else:
                state_feats = fused.data
                state_mask = np.broadcast_to(
                    model.bdst.valid_flat, (len(active), model.bdst.valid_flat.size)
                )
            db_vecs = np.stack([kb.db_vector(s) for s in states])
            hyps, act_probs = decode_responses(
                model, ctx_ids, utt_ids, state_feats, state_mask, db_vecs, beam_size=beam_size
            )
            pred_acts = model.darg.predict_acts(act_probs)
            pred_res = [
                [model.res_vocab.token(i) for i in h.tokens if i != EOS_ID] for h in hyps
            ]

        for i, (did, t) in enumerate(active):
            records[did].turns[depth] = ReplayTurn(
                turn_index=t.turn_index,
                user=t.user,
                gold_state=t.gold_state,
                pred_state=states[i],
                gold_acts=sorted(t.gold_acts),
                pred_acts=sorted(pred_acts[i]),
                response_gold=t.response,
                response_pred=pred_res[i],
            )
            pred_prev[did] = states[i]
        if progress:
            progress(depth + 1, max_depth)
    return [records[did] for did in sorted(records)]
