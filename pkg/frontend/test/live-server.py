#!/usr/bin/env python3
"""Fixture for the live frontend tests.

Trains a small model until it overfits the deterministic synthetic
world, serves it on a free port, prints "PORT <n>" on stdout, and then
runs until killed. Requires the python package to be installed.
"""

import sys
import tempfile
from pathlib import Path

from taskdial.corpus import build_matcher, build_vocab, load_corpus
from taskdial.kb import KB
from taskdial.model import DialogueModel, ModelConfig
from taskdial.service import make_server
from taskdial.synthetic import SyntheticSpec, synthetic_ontology, write_corpus
from taskdial.trainer import TrainConfig, train


def main() -> int:
    tmp = Path(tempfile.mkdtemp(prefix="taskdial-live-"))
    write_corpus(tmp, SyntheticSpec(n_dialogues=12, seed=21))
    ontology = synthetic_ontology()
    kb = KB.from_dir(ontology, tmp / "db")
    corpus = load_corpus(tmp / "data.json", ontology, build_matcher(kb))
    src_vocab, res_vocab = build_vocab(corpus, ontology)
    turns = [t for d in sorted(corpus.dialogues) for t in corpus.dialogues[d]]

    cfg = ModelConfig(
        mode="e2e", d=48, n_heads=4, n_slot_blocks=2, n_domain_blocks=2,
        n_gen_blocks=2, dropout=0.0, seed=5, beam_size=2, max_res_len=40,
    )
    model = DialogueModel(cfg, ontology, src_vocab, res_vocab)
    print("training the fixture model", file=sys.stderr, flush=True)
    tcfg = TrainConfig(model=cfg, epochs=120, batch_size=16, peak_lr=2e-3, warmup_steps=80)
    train(model, turns, [], kb, tcfg)
    model.eval_mode()

    server = make_server(model, kb, port=0)
    print(f"PORT {server.server_address[1]}", flush=True)
    server.serve_forever()
    return 0


if __name__ == "__main__":
    sys.exit(main())
