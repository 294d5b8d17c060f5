"""Entity tables, constraint queries, and per-domain match-count vectors.

A query filters a domain's table by equality on normalized values; the
match count is summarized as a one-hot of six count bins, and the bins
of all domains concatenate into the DB feature the generator attends to.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import QueryError
from .ontology import DONTCARE, NONE_VALUE, DialogueState, Ontology

# canonical forms for frequent annotation variants; keys are written in
# the post-strip space (lowercase, punctuation already removed)
SYNONYMS = {
    "center": "centre",
    "centres": "centre",
    "dont care": "dontcare",
    "don t care": "dontcare",
    "do n t care": "dontcare",
    "doesnt matter": "dontcare",
    "any": "dontcare",
    "not mentioned": NONE_VALUE,
    "moderately priced": "moderate",
    "cheaply": "cheap",
}

_PUNCT_RE = re.compile(r"[^a-z0-9 ]+")


def normalize_value(value) -> str:
    """Case-fold, strip punctuation, collapse spaces, map known variants."""
    if isinstance(value, (list, tuple)):
        value = " ".join(str(v) for v in value)
    s = str(value).lower()
    s = _PUNCT_RE.sub(" ", s)
    s = " ".join(s.split())
    return SYNONYMS.get(s, s)


# count bins: {0}, {1}, {2-3}, {4-5}, {6-10}, {>10}
N_BINS = 6
_BIN_EDGES = (0, 1, 3, 5, 10)


def count_bin(count: int) -> np.ndarray:
    """One-hot of the bin holding ``count``."""
    if count < 0:
        raise QueryError(f"negative match count: {count}")
    v = np.zeros(N_BINS, dtype=np.float32)
    for i, edge in enumerate(_BIN_EDGES):
        if count <= edge:
            v[i] = 1.0
            return v
    v[N_BINS - 1] = 1.0
    return v


class EntityTable:
    """One domain's entities: named columns over normalized value rows."""

    def __init__(self, domain: str, columns, rows):
        self.domain = domain
        self.columns = list(columns)
        self.rows = []
        for row in rows:
            self.rows.append({c: row.get(c) for c in self.columns if row.get(c) is not None})
        self._norm = [
            {c: normalize_value(v) for c, v in row.items()} for row in self.rows
        ]

    def __len__(self):
        return len(self.rows)

    @classmethod
    def from_tsv(cls, domain: str, path) -> "EntityTable":
        """Toy format: first line tab-separated column names, then rows."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        rows = []
        for line in lines[1:]:
            if not line.strip():
                continue
            cells = line.split("\t")
            rows.append({c: v for c, v in zip(header, cells) if v != ""})
        return cls(domain, header, rows)

    @classmethod
    def from_json(cls, domain: str, path) -> "EntityTable":
        """Published format: a JSON list of attribute dicts."""
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        columns = []
        for rec in records:
            for k in rec:
                if k not in columns:
                    columns.append(k)
        return cls(domain, columns, [{k: str(v) for k, v in rec.items()} for rec in records])

    def match(self, constraints: dict) -> list:
        """Rows equal to every constraint after normalization.

        Constraints on columns the table does not have, and constraint
        values meaning "anything" (dontcare) or "unset" (none), are
        skipped rather than failing the row.
        """
        active = {}
        for slot, value in constraints.items():
            norm = normalize_value(value)
            if norm in (DONTCARE, NONE_VALUE, ""):
                continue
            if slot in self.columns:
                active[slot] = norm
        out = []
        for i, norm_row in enumerate(self._norm):
            if all(norm_row.get(c) == v for c, v in active.items()):
                out.append(self.rows[i])
        return out


class KB:
    """All domain tables plus the ontology-ordered DB vector layout."""

    def __init__(self, ontology: Ontology, tables: dict):
        self.ontology = ontology
        self._tables = dict(tables)
        unknown = set(self._tables) - set(ontology.domains)
        if unknown:
            raise QueryError(f"tables for unknown domains: {sorted(unknown)}")

    @classmethod
    def from_dir(cls, ontology: Ontology, db_dir) -> "KB":
        """Load <domain>_db.tsv / <domain>_db.json files from a directory."""
        db_dir = Path(db_dir)
        tables = {}
        for domain in ontology.domains:
            tsv = db_dir / f"{domain}_db.tsv"
            js = db_dir / f"{domain}_db.json"
            if tsv.exists():
                tables[domain] = EntityTable.from_tsv(domain, tsv)
            elif js.exists():
                tables[domain] = EntityTable.from_json(domain, js)
        return cls(ontology, tables)

    def has_db(self, domain: str) -> bool:
        return domain in self._tables

    def domains_with_db(self) -> list:
        return [d for d in self.ontology.domains if d in self._tables]

    def table(self, domain: str) -> EntityTable:
        return self._tables[domain]

    def query(self, domain: str, constraints: dict) -> list:
        """Matching rows for a domain; [] when the domain has no table."""
        if domain not in self.ontology.domains:
            raise QueryError(f"unknown domain: {domain}")
        if domain not in self._tables:
            return []
        # constraint keys may be slot names; map them to table columns
        mapped = {}
        for slot, value in constraints.items():
            col = slot
            if not any(col in t.columns for t in (self._tables[domain],)):
                if slot in [s.name for s in self.ontology.slots]:
                    col = self.ontology.slot(slot).key
            mapped[col] = value
        return self._tables[domain].match(mapped)

    def query_state(self, state: DialogueState, domain: str) -> list:
        constraints = {s: " ".join(v) for s, v in state.inform.get(domain, {}).items()}
        return self.query(domain, constraints)

    def db_vector(self, state: DialogueState) -> np.ndarray:
        """Concatenated per-domain count bins for a state, length 6·|D|.

        Domains without constraints bin their full table size; domains
        without a table bin to the zero-count bucket.
        """
        blocks = []
        for domain in self.ontology.domains:
            if not self.has_db(domain):
                blocks.append(count_bin(0))
                continue
            rows = self.query_state(state, domain)
            blocks.append(count_bin(len(rows)))
        return np.concatenate(blocks)

    def vector_length(self) -> int:
        return N_BINS * self.ontology.n_domains
