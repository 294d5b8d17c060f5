#!/usr/bin/env python3
"""A scripted chat with the trained model.

A Session owns one conversation: each step tracks the state from the
new utterance, queries the database with it, beam-decodes a response
template, and fills the template's entity tags from a matching row.
Run 04_training.py first to produce the checkpoint.
"""

import sys

from common import CHECKPOINT, banner, build_world
from taskdial.checkpoint import load_checkpoint
from taskdial.inference import Session, export_trace

if not CHECKPOINT.exists():
    sys.exit("no checkpoint yet: run 04_training.py first")

ontology, kb, corpus, _, _ = build_world()
model = load_checkpoint(CHECKPOINT).build_model()

banner("1. Three turns, state threaded forward")

# the model memorized a 12-dialogue world, so we speak its language
session = Session(model, kb)
script = [
    "i am looking for a chinese restaurant to visit",
    "it should be cheap please",
    "yes , can you tell me the phone ?",
]
for text in script:
    record = session.step_turn(text)
    print(f"\nuser  > {text}")
    informed = record.state.to_dict()["inform"]
    requested = record.state.to_dict()["request"]
    print(f"state : inform={informed} request={requested}")
    predicted = [a for a, p in record.acts if p >= model.cfg.act_threshold]
    print(f"acts  : {predicted}")
    print(f"db    : {record.db_counts}")
    print(f"delex : {' '.join(record.response_delex)}")
    print(f"system> {record.response}")

banner("2. Decoding is a length-normalized beam search")

print(f"beam size {model.cfg.beam_size}, length penalty alpha "
      f"{model.cfg.length_norm}: hypotheses are ranked by logprob / len^alpha,")
print("so longer complete answers can beat short safe ones.")

banner("3. Every turn keeps its attention trace")

trace = export_trace(session, turn_index=1)
print("levels traced:", list(trace["levels"]))
gen0 = trace["levels"]["generator"][0][0]
print(f"generator block 1, stage '{gen0['name']}':")
print("  queries:", gen0["query_labels"][:6], "...")
w = gen0["weights"]
print(f"  weights: {len(w)} head(s) x {len(w[0])} queries x {len(w[0][0])} keys")
print("\nthe HTTP service serves this same structure as JSON; the browser")
print("UI renders it as heatmaps. 06_evaluation.py scores the model next.")
