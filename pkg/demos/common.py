"""Shared scaffolding for the demo scripts.

Every demo works against the same deterministic synthetic world so that
artifacts produced by one script (the corpus, the trained checkpoint)
can be picked up by the next. Everything lands in demos/output/.
"""

from pathlib import Path

from taskdial.corpus import build_matcher, build_vocab, load_corpus
from taskdial.kb import KB
from taskdial.synthetic import SyntheticSpec, synthetic_ontology, write_corpus

SPEC = SyntheticSpec(n_dialogues=12, seed=21)
OUTPUT = Path(__file__).resolve().parent / "output"
CORPUS_DIR = OUTPUT / "corpus"
CHECKPOINT = OUTPUT / "demo.ckpt"


def build_world():
    """Generate (or reuse) the demo corpus and load everything from it."""
    if not (CORPUS_DIR / "data.json").exists():
        write_corpus(CORPUS_DIR, SPEC)
    ontology = synthetic_ontology()
    kb = KB.from_dir(ontology, CORPUS_DIR / "db")
    corpus = load_corpus(CORPUS_DIR / "data.json", ontology, build_matcher(kb))
    src_vocab, res_vocab = build_vocab(corpus, ontology)
    return ontology, kb, corpus, src_vocab, res_vocab


def all_turns(corpus):
    return [t for d in sorted(corpus.dialogues) for t in corpus.dialogues[d]]


def banner(title):
    print()
    print("=" * 72)
    print(title)
    print("=" * 72)
