"""Ontology, dialogue states, and their canonical text serialization.

The ontology fixes the orderings everything else indexes into: domains,
slots, valid (domain, slot) pairs, and act labels. A dialogue state is a
per-domain record of inform slot values plus a set of requested slots;
states move between turns as flat token sequences, so serialization must
be deterministic and parsing must be total (model-generated sequences
can be arbitrary).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import StateValidationError

REQ_MARKER = "<req>"
NONE_VALUE = "none"
DONTCARE = "dontcare"


@dataclass(frozen=True)
class Slot:
    """A slot identity; its name doubles as the vocabulary token.

    ``data_key`` is the field name used by annotation files when it
    differs from the slot name (prefixed naming schemes).
    """

    name: str
    informable: bool = False
    requestable: bool = False
    data_key: str = ""

    @property
    def key(self) -> str:
        return self.data_key or self.name


class Ontology:
    """Fixed, ordered universe of domains, slots, pairs, and acts."""

    def __init__(
        self,
        domains: Sequence[str],
        slots: Sequence[Slot],
        pairs: Iterable[tuple],
        acts: Sequence[str] = (),
    ):
        self.domains = tuple(domains)
        self.slots = tuple(slots)
        self.acts = tuple(acts)
        if len(set(self.domains)) != len(self.domains):
            raise StateValidationError("duplicate domain names")
        names = [s.name for s in self.slots]
        if len(set(names)) != len(names):
            raise StateValidationError("duplicate slot names")
        overlap = set(self.domains) & set(names)
        if overlap:
            raise StateValidationError(f"domain and slot names collide: {sorted(overlap)}")
        self._dom_idx = {d: i for i, d in enumerate(self.domains)}
        self._slot_idx = {s.name: i for i, s in enumerate(self.slots)}
        self._slot_by_name = {s.name: s for s in self.slots}
        for d, s in pairs:
            if d not in self._dom_idx or s not in self._slot_idx:
                raise StateValidationError(f"pair ({d}, {s}) references unknown domain or slot")
        self.pairs = tuple(sorted(set(pairs), key=lambda p: (self._dom_idx[p[0]], self._slot_idx[p[1]])))
        self._pair_set = set(self.pairs)
        self.inform_pairs = tuple(
            (d, s) for d, s in self.pairs if self._slot_by_name[s].informable
        )
        self.request_pairs = tuple(
            (d, s) for d, s in self.pairs if self._slot_by_name[s].requestable
        )

    # -- lookups --------------------------------------------------------------

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_acts(self) -> int:
        return len(self.acts)

    def domain_index(self, d: str) -> int:
        return self._dom_idx[d]

    def slot_index(self, s: str) -> int:
        return self._slot_idx[s]

    def act_index(self, a: str) -> int:
        return self.acts.index(a)

    def slot(self, name: str) -> Slot:
        return self._slot_by_name[name]

    def is_domain(self, tok: str) -> bool:
        return tok in self._dom_idx

    def is_slot(self, tok: str) -> bool:
        return tok in self._slot_idx

    def valid_pair(self, d: str, s: str) -> bool:
        return (d, s) in self._pair_set

    def pair_mask(self):
        """Boolean [n_domains, n_slots] grid of valid pairs."""
        import numpy as np

        m = np.zeros((self.n_domains, self.n_slots), dtype=bool)
        for d, s in self.pairs:
            m[self._dom_idx[d], self._slot_idx[s]] = True
        return m

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "domains": list(self.domains),
            "slots": [
                {
                    "name": s.name,
                    "informable": s.informable,
                    "requestable": s.requestable,
                    "data_key": s.data_key,
                }
                for s in self.slots
            ],
            "pairs": [list(p) for p in self.pairs],
            "acts": list(self.acts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ontology":
        return cls(
            domains=d["domains"],
            slots=[
                Slot(s["name"], s["informable"], s["requestable"], s.get("data_key", ""))
                for s in d["slots"]
            ],
            pairs=[tuple(p) for p in d["pairs"]],
            acts=d.get("acts", []),
        )

    def __eq__(self, other):
        return isinstance(other, Ontology) and self.to_dict() == other.to_dict()


@dataclass
class DialogueState:
    """Per-domain inform values and requested slots.

    Inform values are token tuples. A slot set to ("none",) is identical
    to an absent slot and is normalized away, so states compare equal
    regardless of how "no value" was expressed.
    """

    inform: dict = field(default_factory=dict)
    request: dict = field(default_factory=dict)

    def __post_init__(self):
        norm_inf = {}
        for d, slots in self.inform.items():
            kept = {s: tuple(v) for s, v in slots.items() if tuple(v) not in ((), (NONE_VALUE,))}
            if kept:
                norm_inf[d] = kept
        self.inform = norm_inf
        norm_req = {}
        for d, slots in self.request.items():
            kept = set(slots)
            if kept:
                norm_req[d] = kept
        self.request = norm_req

    def set_inform(self, domain: str, slot: str, value: Sequence[str]):
        value = tuple(value)
        if value in ((), (NONE_VALUE,)):
            self.inform.get(domain, {}).pop(slot, None)
            if domain in self.inform and not self.inform[domain]:
                del self.inform[domain]
        else:
            self.inform.setdefault(domain, {})[slot] = value

    def add_request(self, domain: str, slot: str):
        self.request.setdefault(domain, set()).add(slot)

    def value(self, domain: str, slot: str) -> tuple:
        """Value tokens for a pair; ("none",) when the slot is unset."""
        return self.inform.get(domain, {}).get(slot, (NONE_VALUE,))

    def domains_touched(self) -> set:
        return set(self.inform) | set(self.request)

    def is_empty(self) -> bool:
        return not self.inform and not self.request

    def copy(self) -> "DialogueState":
        return DialogueState(
            inform={d: dict(s) for d, s in self.inform.items()},
            request={d: set(s) for d, s in self.request.items()},
        )

    def validate(self, ontology: Ontology):
        for d, slots in self.inform.items():
            for s, v in slots.items():
                if not ontology.valid_pair(d, s) or not ontology.slot(s).informable:
                    raise StateValidationError(f"invalid inform pair ({d}, {s})")
                if len(v) == 0:
                    raise StateValidationError(f"empty value for ({d}, {s})")
        for d, slots in self.request.items():
            for s in slots:
                if not ontology.valid_pair(d, s) or not ontology.slot(s).requestable:
                    raise StateValidationError(f"invalid request pair ({d}, {s})")

    def __eq__(self, other):
        return (
            isinstance(other, DialogueState)
            and self.inform == other.inform
            and self.request == other.request
        )

    def to_dict(self) -> dict:
        return {
            "inform": {d: {s: list(v) for s, v in slots.items()} for d, slots in self.inform.items()},
            "request": {d: sorted(slots) for d, slots in self.request.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialogueState":
        return cls(
            inform={dd: {s: tuple(v) for s, v in slots.items()} for dd, slots in d.get("inform", {}).items()},
            request={dd: set(slots) for dd, slots in d.get("request", {}).items()},
        )


def serialize_state(state: DialogueState, ontology: Ontology) -> list:
    """Flatten a state to its canonical token sequence.

    Per domain in ontology order (domains with no content are skipped):
    the domain token, each set inform slot in slot order as the slot
    token followed by its value tokens, then the request marker and the
    requested slot tokens in slot order.
    """
    state.validate(ontology)
    out = []
    for d in ontology.domains:
        informs = [
            (s.name, state.inform[d][s.name])
            for s in ontology.slots
            if s.name in state.inform.get(d, {})
        ]
        reqs = [s.name for s in ontology.slots if s.name in state.request.get(d, set())]
        if not informs and not reqs:
            continue
        out.append(d)
        for name, value in informs:
            out.append(name)
            out.extend(value)
        if reqs:
            out.append(REQ_MARKER)
            out.extend(reqs)
    return out


def parse_state(tokens: Sequence[str], ontology: Ontology) -> DialogueState:
    """Recover a state from a token sequence. Total: never raises.

    The grammar is ambiguous because values may contain domain or slot
    names, so structural tokens only take effect when they move strictly
    forward in ontology order: a domain token opens a new domain section
    only if it is later than the current domain, and a slot token opens a
    new slot only if it is later than the current slot. Anything else is
    treated as value text. Tokens that fit nowhere (including slots
    invalid for the current domain) are dropped.
    """
    state = DialogueState()
    cur_domain: Optional[str] = None
    cur_slot: Optional[str] = None
    values: list = []
    section = "inform"
    dropping = False

    def commit():
        nonlocal cur_slot, values
        if cur_domain and cur_slot and values:
            state.set_inform(cur_domain, cur_slot, values)
        cur_slot = None
        values = []

    for tok in tokens:
        starts_domain = ontology.is_domain(tok) and (
            cur_domain is None or ontology.domain_index(tok) > ontology.domain_index(cur_domain)
        )
        if starts_domain:
            commit()
            cur_domain = tok
            section = "inform"
            dropping = False
            continue
        if tok == REQ_MARKER:
            if cur_domain is not None:
                commit()
                section = "request"
                dropping = False
            continue
        if cur_domain is None:
            continue
        if section == "inform":
            if ontology.is_slot(tok) and ontology.slot(tok).informable and (
                cur_slot is None or ontology.slot_index(tok) > ontology.slot_index(cur_slot)
            ):
                commit()
                if ontology.valid_pair(cur_domain, tok):
                    cur_slot = tok
                    dropping = False
                else:
                    dropping = True
            elif cur_slot is not None and not dropping:
                values.append(tok)
        else:
            if (
                ontology.is_slot(tok)
                and ontology.slot(tok).requestable
                and ontology.valid_pair(cur_domain, tok)
            ):
                state.add_request(cur_domain, tok)
    commit()
    return state
