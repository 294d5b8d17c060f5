#!/usr/bin/env python3
"""Training the full engine end to end on the demo corpus.

One model carries three potential jobs: track states (dst), generate a
system response from a given state (c2t), or both at once (e2e). Here we
train the e2e variant until it memorizes the small corpus, watching the
loss and the warmup-then-decay learning rate, and keep the checkpoint
for the later demos.
"""

import time

from common import CHECKPOINT, all_turns, banner, build_world
from taskdial.model import DialogueModel, ModelConfig
from taskdial.trainer import TrainConfig, lr_at, train

banner("1. Model and schedule")

ontology, kb, corpus, src_vocab, res_vocab = build_world()
turns = all_turns(corpus)

cfg = ModelConfig(
    mode="e2e", d=48, n_heads=4, n_slot_blocks=2, n_domain_blocks=2,
    n_gen_blocks=2, dropout=0.0, seed=5, beam_size=2, max_res_len=40,
)
tcfg = TrainConfig(model=cfg, epochs=120, batch_size=16, peak_lr=2e-3, warmup_steps=80)

model = DialogueModel(cfg, ontology, src_vocab, res_vocab)
print(f"parameters: {model.store.n_scalars():,} across {len(model.store)} tensors")
print(f"{len(turns)} training turns, {tcfg.epochs} epochs, batch {tcfg.batch_size}")
print("\nlearning rate ramps linearly for", tcfg.warmup_steps,
      "steps, then decays as 1/sqrt(step):")
for s in (1, 40, 80, 320, 1280):
    print(f"  step {s:5d}: {lr_at(s, tcfg.peak_lr, tcfg.warmup_steps):.6f}")

banner("2. The run")

started = time.monotonic()
result = train(model, turns, [], kb, tcfg, checkpoint_path=CHECKPOINT)
elapsed = time.monotonic() - started

for row in result.history:
    if row.epoch % 20 == 0 or row.epoch in (1, tcfg.epochs):
        print(f"  epoch {row.epoch:3d}  train {row.train_loss:8.4f}  val {row.val_loss:8.4f}")
print(f"\nbest val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}; "
      f"{elapsed:.0f}s on one CPU")
print("checkpoint:", CHECKPOINT)
print("\n05_chat_session.py talks to this model interactively.")
