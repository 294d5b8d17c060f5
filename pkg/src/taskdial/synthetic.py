"""Seeded two-domain toy corpus: entity tables, dialogues, goals, acts.

Generation is entity-first: each dialogue samples a target row from a
domain table, takes a subset of its attributes as the user's constraints,
and scripts a short exchange around it. Goals are therefore always
satisfiable, gold states are exact by construction, and a perfect agent
replaying the gold responses completes every task.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ontology import Ontology, Slot

EATERY_NAMES = [
    "the golden fork", "blue lotus", "river diner", "old mill table",
    "spice harbour", "green door kitchen", "the copper pot", "little acorn",
    "harbour lights", "the walnut tree", "red lantern", "stone oven house",
]
VENUE_NAMES = [
    "city art hall", "north meadow park", "the round tower", "glass river gallery",
    "old dock theatre", "king street arcade", "willow gardens", "the iron bridge",
    "summer field grounds", "clock lane museum", "the blue pavilion", "market cross hall",
]
FOODS = ["italian", "chinese", "indian", "british"]
PRICES = ["cheap", "moderate", "expensive"]
AREAS = ["north", "south", "centre", "east"]
KINDS = ["museum", "cinema", "park", "gallery"]
STREETS = ["mill lane", "regent walk", "station road", "abbey row"]

ACTS = [
    "request-pricerange", "request-food", "request-kind", "request-area",
    "inform-name", "inform-area", "inform-phone", "inform-address",
    "inform-entryfee", "bye-none",
]


@dataclass
class SyntheticSpec:
    n_dialogues: int = 30
    rows_per_domain: int = 8
    multi_domain_every: int = 3  # every k-th dialogue covers both domains
    seed: int = 7

    def to_dict(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "rows_per_domain": self.rows_per_domain,
            "multi_domain_every": self.multi_domain_every,
            "seed": self.seed,
        }


def synthetic_ontology() -> Ontology:
    slots = [
        Slot("food", informable=True),
        Slot("pricerange", informable=True),
        Slot("kind", informable=True),
        Slot("area", informable=True),
        Slot("phone", requestable=True),
        Slot("address", requestable=True),
        Slot("entryfee", requestable=True),
    ]
    pairs = [
        ("eatery", "food"), ("eatery", "pricerange"), ("eatery", "area"),
        ("eatery", "phone"), ("eatery", "address"),
        ("venue", "kind"), ("venue", "area"),
        ("venue", "phone"), ("venue", "entryfee"),
    ]
    return Ontology(domains=["eatery", "venue"], slots=slots, pairs=pairs, acts=ACTS)


def _tables(rng: np.random.Generator, rows_per_domain: int) -> dict:
    eatery = []
    for i in range(rows_per_domain):
        eatery.append({
            "id": f"e{i + 1}",
            "name": EATERY_NAMES[i % len(EATERY_NAMES)],
            "food": FOODS[int(rng.integers(len(FOODS)))],
            "pricerange": PRICES[int(rng.integers(len(PRICES)))],
            "area": AREAS[int(rng.integers(len(AREAS)))],
            "phone": f"0122{int(rng.integers(1000000, 9999999))}",
            "address": f"{int(rng.integers(1, 60))} {STREETS[int(rng.integers(len(STREETS)))]}",
        })
    venue = []
    for i in range(rows_per_domain):
        venue.append({
            "id": f"v{i + 1}",
            "name": VENUE_NAMES[i % len(VENUE_NAMES)],
            "kind": KINDS[int(rng.integers(len(KINDS)))],
            "area": AREAS[int(rng.integers(len(AREAS)))],
            "phone": f"0199{int(rng.integers(1000000, 9999999))}",
            "entryfee": ["free", "2 pounds", "5 pounds"][int(rng.integers(3))],
        })
    return {"eatery": eatery, "venue": venue}


_EATERY_CONSTRAINT_ORDER = ("food", "pricerange", "area")
_VENUE_CONSTRAINT_ORDER = ("kind", "area")
_REQUESTABLE = {"eatery": ("phone", "address"), "venue": ("phone", "entryfee")}


def _domain_episode(domain: str, row: dict, constraint_slots, requested):
    """Script one domain's segment: (user text, sys text, acts, semi, requests)."""
    noun = "restaurant" if domain == "eatery" else "place"
    c1, c2 = constraint_slots
    steps = []

    steps.append({
        "user": f"i am looking for a {row[c1]} {noun} to visit",
        "sys": f"sure , what {c2} do you have in mind ?",
        "acts": {f"{domain.capitalize()}-Request": [[c2, "?"]]},
        "semi": {c1: row[c1]},
        "requests": [],
    })
    steps.append({
        "user": f"it should be {row[c2]} please",
        "sys": f"{row['name']} is a {row[c1]} {noun} in the {row['area']} , shall i book it ?",
        "acts": {f"{domain.capitalize()}-Inform": [["name", row["name"]], ["area", row["area"]]]},
        "semi": {c2: row[c2]},
        "requests": [],
    })
    req_bits = " and ".join(f"the {r}" for r in requested)
    answers = " and ".join(f"the {r} is {row[r]}" for r in requested)
    steps.append({
        "user": f"yes , can you tell me {req_bits} ?",
        "sys": f"of course , {answers} . anything else ?",
        "acts": {f"{domain.capitalize()}-Inform": [[r, row[r]] for r in requested]},
        "semi": {},
        "requests": list(requested),
    })
    return steps


def _closing_step():
    return {
        "user": "no that is all , thank you",
        "sys": "you are welcome , goodbye !",
        "acts": {"general-bye": [["none", "none"]]},
        "semi": {},
        "requests": [],
    }


def generate(spec: SyntheticSpec) -> dict:
    """Build {"data": MultiWOZ-shaped dict, "tables": domain rows, "spec": ...}."""
    rng = np.random.default_rng(spec.seed)
    tables = _tables(rng, spec.rows_per_domain)
    data = {}
    for n in range(spec.n_dialogues):
        multi = spec.multi_domain_every > 0 and (n + 1) % spec.multi_domain_every == 0
        if multi:
            domains = ["eatery", "venue"]
        else:
            domains = ["eatery" if rng.random() < 0.5 else "venue"]

        goal = {}
        log = []
        semi_acc = {"eatery": {}, "venue": {}}
        for domain in domains:
            rows = tables[domain]
            row = rows[int(rng.integers(len(rows)))]
            order = _EATERY_CONSTRAINT_ORDER if domain == "eatery" else _VENUE_CONSTRAINT_ORDER
            pool = list(order)
            i = int(rng.integers(len(pool) - 1))
            constraint_slots = (pool[i], pool[i + 1])
            reqs = _REQUESTABLE[domain]
            requested = [reqs[int(rng.integers(len(reqs)))]]
            if rng.random() < 0.5:
                requested = list(dict.fromkeys([requested[0], reqs[0]]))
            goal[domain] = {
                "info": {s: row[s] for s in constraint_slots},
                "reqt": list(requested),
            }
            for step in _domain_episode(domain, row, constraint_slots, requested):
                semi_acc[domain].update(step["semi"])
                metadata = {
                    d: {"semi": dict(semi_acc[d]), "book": {}} for d in semi_acc if semi_acc[d]
                }
                user_acts = {}
                if step["requests"]:
                    user_acts[f"{domain.capitalize()}-Request"] = [[r, "?"] for r in step["requests"]]
                log.append({"text": step["user"], "metadata": {}, "dialog_act": user_acts})
                log.append({"text": step["sys"], "metadata": metadata, "dialog_act": step["acts"]})
        closing = _closing_step()
        metadata = {d: {"semi": dict(semi_acc[d]), "book": {}} for d in semi_acc if semi_acc[d]}
        log.append({"text": closing["user"], "metadata": {}, "dialog_act": {}})
        log.append({"text": closing["sys"], "metadata": metadata, "dialog_act": closing["acts"]})

        data[f"SYN{n:04d}.json"] = {"goal": goal, "log": log}
    return {"data": data, "tables": tables, "spec": spec.to_dict()}


def write_corpus(out_dir, spec: SyntheticSpec) -> dict:
    """Write data.json, per-domain TSV tables, and the generator manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = generate(spec)
    (out / "data.json").write_text(json.dumps(bundle["data"], indent=1, sort_keys=True))
    db_dir = out / "db"
    db_dir.mkdir(exist_ok=True)
    for domain, rows in bundle["tables"].items():
        columns = list(rows[0].keys())
        lines = ["\t".join(columns)]
        lines += ["\t".join(str(r[c]) for c in columns) for r in rows]
        (db_dir / f"{domain}_db.tsv").write_text("\n".join(lines) + "\n")
    (out / "synthetic.json").write_text(json.dumps(bundle["spec"], indent=1, sort_keys=True))
    return bundle
