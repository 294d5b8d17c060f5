"""Corpus ingestion, tokenization, delexicalization, vocab, and caching.

The loader reads dialogue annotation files in the published multi-domain
layout: a data.json mapping dialogue id to a goal record and a log of
alternating user/system entries, where system entries carry the belief
state in ``metadata`` and both sides may carry ``dialog_act``. System
responses are delexicalized against the entity databases so generation
targets contain canonical domain_slot tags instead of entity values.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .ontology import (
    DONTCARE,
    NONE_VALUE,
    REQ_MARKER,
    DialogueState,
    Ontology,
    Slot,
    serialize_state,
)

PAD, UNK, BOS, EOS, VAL = "<pad>", "<unk>", "<bos>", "<eos>", "<val>"
RESERVED = (PAD, UNK, BOS, EOS, VAL)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, VAL_ID = range(5)
BLANK, USR_SEP, SYS_SEP = "<blank>", "<usr>", "<sys>"

_TOKEN_RE = re.compile(r"[a-z0-9][a-z0-9_']*|[^\sa-z0-9]")


def tokenize(text: str) -> list:
    """Case-fold, then split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Bijective token<->index table with a fixed reserved prefix."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:5]) != RESERVED:
            raise DataError("vocab must start with the reserved token block")
        if len(set(tokens)) != len(tokens):
            raise DataError("vocab contains duplicate tokens")
        self._tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, counts: dict, min_count: int = 1, always: tuple = ()) -> "Vocab":
        """Reserved block, then ``always`` tokens, then counted tokens.

        Counted tokens below min_count are left out (they encode to the
        unknown index); ``always`` tokens are kept regardless of count.
        """
        tokens = list(RESERVED)
        seen = set(tokens)
        for t in always:
            if t not in seen:
                tokens.append(t)
                seen.add(t)
        for t in sorted(counts):
            if counts[t] >= min_count and t not in seen:
                tokens.append(t)
                seen.add(t)
        return cls(tokens)

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, tok):
        return tok in self._index

    def index(self, tok: str) -> int:
        return self._index.get(tok, UNK_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens) -> np.ndarray:
        return np.array([self._index.get(t, UNK_ID) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list:
        return [self._tokens[int(i)] for i in ids]

    def to_list(self) -> list:
        return list(self._tokens)


@dataclass
class DialogueTurn:
    """One supervised exchange: user turn t in, system response t out."""

    dialogue_id: str
    turn_index: int
    user: list
    prev_response: list
    history: list  # [(speaker, tokens)] for everything before user turn t
    prev_state: DialogueState
    gold_state: DialogueState
    gold_acts: list
    response: list  # delexicalized target response tokens
    response_raw: list
    goal: dict

    def act_vector(self, ontology: Ontology) -> np.ndarray:
        v = np.zeros(ontology.n_acts, dtype=np.float32)
        for a in self.gold_acts:
            if a in ontology.acts:
                v[ontology.act_index(a)] = 1.0
        return v

    def to_dict(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "user": self.user,
            "prev_response": self.prev_response,
            "history": [[spk, toks] for spk, toks in self.history],
            "prev_state": self.prev_state.to_dict(),
            "gold_state": self.gold_state.to_dict(),
            "gold_acts": self.gold_acts,
            "response": self.response,
            "response_raw": self.response_raw,
            "goal": self.goal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialogueTurn":
        return cls(
            dialogue_id=d["dialogue_id"],
            turn_index=d["turn_index"],
            user=d["user"],
            prev_response=d["prev_response"],
            history=[(spk, toks) for spk, toks in d["history"]],
            prev_state=DialogueState.from_dict(d["prev_state"]),
            gold_state=DialogueState.from_dict(d["gold_state"]),
            gold_acts=d["gold_acts"],
            response=d["response"],
            response_raw=d["response_raw"],
            goal=d["goal"],
        )


@dataclass
class Corpus:
    turns: list = field(default_factory=list)
    dialogues: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def n_dialogues(self) -> int:
        return len(self.dialogues)

    def mean_domains_per_dialogue(self) -> float:
        if not self.dialogues:
            return 0.0
        counts = []
        for turns in self.dialogues.values():
            doms = set()
            for t in turns:
                doms |= t.gold_state.domains_touched()
            counts.append(len(doms))
        return float(np.mean(counts))


# -- delexicalization ---------------------------------------------------------


class DelexMatcher:
    """Longest-match replacement of known entity values with their tags.

    Built from (value token sequence, domain_slot tag) pairs. At each
    position the longest matching span wins; ties break on insertion
    order, so domain and column order of the source tables is decisive.
    """

    def __init__(self):
        self._by_first: dict = {}
        self._n = 0

    def add(self, value_tokens, tag: str):
        value_tokens = tuple(value_tokens)
        if not value_tokens or value_tokens == (tag,):
            return
        self._by_first.setdefault(value_tokens[0], []).append((value_tokens, tag, self._n))
        self._n += 1

    def freeze(self):
        for k in self._by_first:
            self._by_first[k].sort(key=lambda e: (-len(e[0]), e[2]))
        return self

    def tags(self) -> set:
        out = set()
        for entries in self._by_first.values():
            out |= {tag for _, tag, _ in entries}
        return out

    def replace(self, tokens) -> list:
        out = []
        i = 0
        n = len(tokens)
        while i < n:
            hit = None
            for value, tag, _ in self._by_first.get(tokens[i], ()):
                if tuple(tokens[i : i + len(value)]) == value:
                    hit = (len(value), tag)
                    break
            if hit:
                out.append(hit[1])
                i += hit[0]
            else:
                out.append(tokens[i])
                i += 1
        return out


def delexicalize(tokens, matcher: DelexMatcher) -> list:
    return matcher.replace(tokens)


def build_matcher(kb) -> DelexMatcher:
    """Collect every DB cell value as a matchable span tagged domain_slot."""
    m = DelexMatcher()
    for domain in kb.domains_with_db():
        table = kb.table(domain)
        for col in table.columns:
            tag = f"{domain}_{col}"
            for row in table.rows:
                raw = row.get(col)
                if raw is None:
                    continue
                toks = tokenize(str(raw))
                if toks:
                    m.add(toks, tag)
    return m.freeze()


# -- loading ------------------------------------------------------------------


def _acts_from_entry(entry: dict) -> dict:
    """Return {act_key: [[slot, value], ...]} from a log entry, or {}."""
    acts = entry.get("dialog_act", {})
    return acts if isinstance(acts, dict) else {}


def act_label(act_key: str, slot: str) -> str:
    """Canonical act label: lowercased act type joined with the slot name."""
    act_type = act_key.split("-", 1)[1] if "-" in act_key else act_key
    return f"{act_type}-{slot}".lower()


def system_act_labels(entry: dict) -> list:
    labels = []
    for key, pairs in _acts_from_entry(entry).items():
        for pair in pairs:
            slot = pair[0] if pair else "none"
            labels.append(act_label(key, str(slot)))
    return sorted(set(labels))


def scan_act_labels(data_path) -> list:
    """Collect every system act label appearing in a data.json file.

    System turns sit at odd log indices; user annotations are ignored.
    """
    text = Path(data_path).read_text()
    raw = json.loads(text) if text.strip() else {}
    labels = set()
    for record in raw.values():
        log = record.get("log", []) if isinstance(record, dict) else []
        for i, entry in enumerate(log):
            if i % 2 == 1 and isinstance(entry, dict):
                labels.update(system_act_labels(entry))
    return sorted(labels)


def _state_from_metadata(metadata: dict, ontology: Ontology) -> DialogueState:
    state = DialogueState()
    for domain, record in metadata.items():
        if domain not in ontology.domains:
            continue
        semi = dict(record.get("semi", {}))
        semi.update({k: v for k, v in record.get("book", {}).items() if not isinstance(v, list)})
        for raw_slot, raw_value in semi.items():
            value = str(raw_value).strip().lower()
            if value in ("", "not mentioned", NONE_VALUE):
                continue
            slot = _resolve_slot(ontology, domain, raw_slot, informable=True)
            if slot is None:
                continue
            state.set_inform(domain, slot, tokenize(value) or [value])
    return state


def _resolve_slot(ontology: Ontology, domain: str, raw: str, informable: bool):
    raw = raw.strip().lower()
    for s in ontology.slots:
        if informable and not s.informable:
            continue
        if not informable and not s.requestable:
            continue
        if s.key.lower() == raw and ontology.valid_pair(domain, s.name):
            return s.name
    return None


def load_corpus(
    data_path,
    ontology: Ontology,
    matcher: DelexMatcher = None,
    include: set = None,
) -> Corpus:
    """Read a data.json dialogue file into supervised turns.

    ``include`` restricts to a set of dialogue ids (one split). Dialogues
    with malformed records are skipped whole, with the reason kept on
    ``Corpus.skipped``.
    """
    data_path = Path(data_path)
    text = data_path.read_text() if data_path.exists() else ""
    raw = json.loads(text) if text.strip() else {}
    corpus = Corpus()
    matcher = matcher or DelexMatcher().freeze()

    for dialogue_id in sorted(raw):
        if include is not None and dialogue_id not in include:
            continue
        record = raw[dialogue_id]
        try:
            turns = _load_dialogue(dialogue_id, record, ontology, matcher)
        except (KeyError, TypeError, ValueError, IndexError) as e:
            corpus.skipped.append((dialogue_id, f"{type(e).__name__}: {e}"))
            continue
        corpus.dialogues[dialogue_id] = turns
        corpus.turns.extend(turns)
    return corpus


def _load_dialogue(dialogue_id, record, ontology, matcher) -> list:
    log = record["log"]
    if len(log) < 2 or len(log) % 2 != 0:
        raise ValueError(f"log length {len(log)} is not a positive even number")
    goal = _parse_goal(record.get("goal", {}), ontology)
    turns = []
    history = []
    prev_state = DialogueState()
    prev_response: list = []
    requests: dict = {}
    for t in range(len(log) // 2):
        user_entry, sys_entry = log[2 * t], log[2 * t + 1]
        user_tokens = tokenize(user_entry["text"])
        for key, pairs in _acts_from_entry(user_entry).items():
            if not key.lower().endswith("-request"):
                continue
            domain = key.split("-", 1)[0].lower()
            if domain not in ontology.domains:
                continue
            for pair in pairs:
                slot = _resolve_slot(ontology, domain, str(pair[0]), informable=False)
                if slot is not None:
                    requests.setdefault(domain, set()).add(slot)
        state = _state_from_metadata(sys_entry.get("metadata", {}), ontology)
        state.request = {d: set(s) for d, s in requests.items()}
        state = DialogueState(inform=state.inform, request=state.request)
        state.validate(ontology)
        response_raw = tokenize(sys_entry["text"])
        response = delexicalize(response_raw, matcher)
        turns.append(
            DialogueTurn(
                dialogue_id=dialogue_id,
                turn_index=t + 1,
                user=user_tokens,
                prev_response=list(prev_response),
                history=list(history),
                prev_state=prev_state.copy(),
                gold_state=state,
                gold_acts=system_act_labels(sys_entry),
                response=response,
                response_raw=response_raw,
                goal=goal,
            )
        )
        history = history + [("usr", user_tokens), ("sys", response)]
        prev_state = state
        prev_response = response
    return turns


def _parse_goal(raw_goal: dict, ontology: Ontology) -> dict:
    goal = {}
    for domain, record in raw_goal.items():
        if domain not in ontology.domains or not isinstance(record, dict):
            continue
        info = record.get("info", {}) or {}
        reqt = record.get("reqt", []) or []
        constraints = {}
        for raw_slot, raw_value in info.items():
            slot = _resolve_slot(ontology, domain, str(raw_slot), informable=True)
            if slot is not None:
                constraints[slot] = str(raw_value).strip().lower()
        requested = []
        for raw_slot in reqt:
            slot = _resolve_slot(ontology, domain, str(raw_slot), informable=False)
            if slot is not None:
                requested.append(slot)
        if constraints or requested:
            goal[domain] = {"constraints": constraints, "requested": requested}
    return goal


# -- context assembly ---------------------------------------------------------


def make_context(turn: DialogueTurn, mode: str) -> list:
    """Context tokens X_ctx for a turn.

    "last-response" uses only the previous system response; "full-history"
    concatenates every earlier utterance with speaker separator tokens.
    Turn 1 has no context and yields the single blank placeholder.
    """
    if mode == "last-response":
        return list(turn.prev_response) if turn.prev_response else [BLANK]
    if mode == "full-history":
        if not turn.history:
            return [BLANK]
        out = []
        for spk, toks in turn.history:
            out.append(USR_SEP if spk == "usr" else SYS_SEP)
            out.extend(toks)
        return out
    raise DataError(f"unknown context mode: {mode}")


# -- vocabulary ---------------------------------------------------------------


def build_vocab(corpus: Corpus, ontology: Ontology, min_count: int = 1, extra_tags=()):
    """Build (source vocab, response vocab) from a loaded corpus.

    The source side covers user text, delexicalized context, and state
    serializations; every ontology token and every gold value token is
    kept regardless of count so states always encode losslessly. The
    response side covers delexicalized responses and their tags.
    """
    src_counts: dict = {}
    res_counts: dict = {}
    always_src = [BLANK, USR_SEP, SYS_SEP, REQ_MARKER, NONE_VALUE, DONTCARE]
    always_src += list(ontology.domains) + [s.name for s in ontology.slots]
    always_res = [BLANK]
    seen_tags = set(extra_tags)

    def bump(counter, tokens):
        for t in tokens:
            counter[t] = counter.get(t, 0) + 1

    for turn in corpus.turns:
        bump(src_counts, turn.user)
        bump(src_counts, turn.prev_response)
        bump(res_counts, turn.response)
        for d, slots in turn.gold_state.inform.items():
            for v in slots.values():
                always_src.extend(v)
        for tok in turn.response:
            if "_" in tok:
                seen_tags.add(tok)

    always_src.extend(sorted(seen_tags))
    always_res.extend(sorted(seen_tags))
    src = Vocab.build(src_counts, min_count=min_count, always=tuple(dict.fromkeys(always_src)))
    res = Vocab.build(res_counts, min_count=min_count, always=tuple(dict.fromkeys(always_res)))
    return src, res


def encode_state(state: DialogueState, ontology: Ontology, vocab: Vocab) -> np.ndarray:
    tokens = serialize_state(state, ontology)
    return vocab.encode(tokens if tokens else [BLANK])


# -- preprocessed cache -------------------------------------------------------

CACHE_VERSION = 1


def save_cache(cache_dir, corpus: Corpus, ontology: Ontology, src_vocab: Vocab, res_vocab: Vocab, source_note: str = ""):
    """Write turns.jsonl plus a fingerprinted manifest."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(t.to_dict(), sort_keys=True) for t in corpus.turns]
    body = ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
    (cache_dir / "turns.jsonl").write_bytes(body)
    manifest = {
        "version": CACHE_VERSION,
        "fingerprint": hashlib.sha256(body).hexdigest(),
        "source_note": source_note,
        "n_turns": len(corpus.turns),
        "n_dialogues": corpus.n_dialogues,
        "skipped": corpus.skipped,
        "ontology": ontology.to_dict(),
        "src_vocab": src_vocab.to_list(),
        "res_vocab": res_vocab.to_list(),
    }
    (cache_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_cache(cache_dir):
    """Read a cache back; verifies version and content fingerprint."""
    cache_dir = Path(cache_dir)
    manifest = json.loads((cache_dir / "manifest.json").read_text())
    if manifest.get("version") != CACHE_VERSION:
        raise DataError(f"cache version {manifest.get('version')} != {CACHE_VERSION}")
    body = (cache_dir / "turns.jsonl").read_bytes()
    digest = hashlib.sha256(body).hexdigest()
    if digest != manifest["fingerprint"]:
        raise DataError("cache fingerprint mismatch: turns.jsonl was modified")
    corpus = Corpus()
    for line in body.decode("utf-8").splitlines():
        if not line.strip():
            continue
        turn = DialogueTurn.from_dict(json.loads(line))
        corpus.turns.append(turn)
        corpus.dialogues.setdefault(turn.dialogue_id, []).append(turn)
    corpus.skipped = [tuple(s) for s in manifest.get("skipped", [])]
    ontology = Ontology.from_dict(manifest["ontology"])
    return corpus, ontology, Vocab(manifest["src_vocab"]), Vocab(manifest["res_vocab"]), manifest


# -- published-dataset ontology ------------------------------------------------

_MW_SLOTS = {
    "restaurant": (
        ["area", "food", "name", "pricerange", "bookday", "bookpeople", "booktime"],
        ["address", "area", "food", "phone", "postcode"],
    ),
    "hotel": (
        ["area", "internet", "name", "parking", "pricerange", "stars", "type", "bookday", "bookpeople", "bookstay"],
        ["address", "area", "internet", "parking", "phone", "postcode", "stars", "type"],
    ),
    "attraction": (["area", "name", "type"], ["address", "area", "phone", "postcode", "type"]),
    "train": (
        ["arriveby", "day", "departure", "destination", "leaveat", "bookpeople"],
        ["duration", "price"],
    ),
    "taxi": (["arriveby", "departure", "destination", "leaveat"], ["phone"]),
    "police": (["department"], ["address", "phone", "postcode"]),
    "hospital": ([], ["address", "phone", "postcode"]),
}


def build_multiwoz_ontology(acts=()) -> Ontology:
    """Seven-domain ontology with prefixed slot names (inf_x / req_x).

    Inform and request slots are disjoint token sets; each slot's data
    key is the unprefixed name used by the annotation files.
    """
    domains = list(_MW_SLOTS)
    inform_names = sorted({s for inf, _ in _MW_SLOTS.values() for s in inf})
    request_names = sorted({s for _, req in _MW_SLOTS.values() for s in req})
    slots = [Slot(f"inf_{s}", informable=True, data_key=s) for s in inform_names]
    slots += [Slot(f"req_{s}", requestable=True, data_key=s) for s in request_names]
    pairs = []
    for d, (inf, req) in _MW_SLOTS.items():
        pairs += [(d, f"inf_{s}") for s in inf]
        pairs += [(d, f"req_{s}") for s in req]
    return Ontology(domains=domains, slots=slots, pairs=pairs, acts=acts)
