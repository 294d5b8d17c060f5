#!/usr/bin/env python3
"""Dialogue states and the bi-level tracker.

A dialogue state is everything the user has pinned down so far: inform
slot values per domain, plus the attributes they asked for. The tracker
reads the conversation with two separate attention stacks, one per slot
and one per domain, and fuses them into one feature grid late. This
script pokes at the state objects first, then runs a freshly initialized
tracker on a real turn to show the grid's shape and masking.
"""

import numpy as np

from common import all_turns, banner, build_world
from taskdial.model import DialogueModel, ModelConfig, collate_turns
from taskdial.ontology import DialogueState, parse_state, serialize_state

banner("1. States are plain, inspectable values")

ontology, kb, corpus, src_vocab, res_vocab = build_world()
print("domains:", ontology.domains)
print("slots  :", [s.name for s in ontology.slots])
print("valid (domain, slot) pairs:", len(ontology.pairs))

state = DialogueState()
state.set_inform("eatery", "food", ("indian",))
state.set_inform("eatery", "pricerange", ("cheap",))
state.add_request("eatery", "phone")
print("\nas dict:", state.to_dict())

banner("2. States round-trip through a flat token sequence")

# the tracker's value decoder emits exactly this grammar
tokens = serialize_state(state, ontology)
print("serialized:", " ".join(tokens))
assert parse_state(tokens, ontology) == state
print("parsed back: equal")

banner("3. The tracker turns a conversation into a domain-by-slot grid")

cfg = ModelConfig(mode="dst", d=32, n_heads=2, n_slot_blocks=2,
                  n_domain_blocks=2, dropout=0.0, seed=4)
model = DialogueModel(cfg, ontology, src_vocab, res_vocab)
model.eval_mode()

turn = all_turns(corpus)[0]
print("user said     :", " ".join(turn.user))
print("gold new state:", turn.gold_state.to_dict())

trace = {}
batch = collate_turns([turn], ontology, src_vocab, res_vocab, kb, cfg)
_, fused, _, _ = model.track(batch, trace=trace)

D, S = ontology.n_domains, ontology.n_slots
grid = fused.data.reshape(D, S, cfg.d)
print(f"\nfused feature grid: {D} domains x {S} slots x d={cfg.d}")

valid = ontology.pair_mask()
print("invalid pairs are exact zeros:", bool(np.all(grid[~valid] == 0.0)))
norms = np.linalg.norm(grid, axis=-1)
header = " ".join(f"{s.name[:9]:>9}" for s in ontology.slots)
print("\nfeature norms (0.00 marks a slot the domain does not have):")
print(f"{'':>8} {header}")
for di, d in enumerate(ontology.domains):
    row = " ".join(f"{norms[di, si]:9.2f}" for si in range(S))
    print(f"{d:>8} {row}")

banner("4. Each tracking level logs its attention stages")

for level in ("slot", "domain"):
    stages = [s["name"] for s in trace[level][0]]
    print(f"{level:>6} level, block 1 stages: {stages}")
print("\nstage weights are what the trace endpoint and the UI heatmaps show;")
print("03_synthetic_corpus.py looks at the data these models train on.")
