#!/usr/bin/env python3
"""The synthetic two-domain corpus and the entity database behind it.

Real dialogue corpora in this format pair a data.json of annotated
conversations with per-domain entity tables. The generator fabricates a
miniature world with the same layout so everything downstream (loading,
delexicalization, database features, metrics) can be exercised without
any download. Same seed, same bytes: corpora are fully reproducible.
"""

from common import CORPUS_DIR, SPEC, banner, build_world

banner("1. What the generator wrote")

ontology, kb, corpus, src_vocab, res_vocab = build_world()
print("corpus dir:", CORPUS_DIR)
for p in sorted(CORPUS_DIR.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(CORPUS_DIR)}  ({p.stat().st_size} bytes)")
print(f"\n{SPEC.n_dialogues} dialogues, seed {SPEC.seed}; "
      f"{sum(len(t) for t in corpus.dialogues.values())} user turns; "
      f"source vocab {len(src_vocab)}, response vocab {len(res_vocab)}")

banner("2. One dialogue, turn by turn")

did = sorted(corpus.dialogues)[2]
turns = corpus.dialogues[did]
print(f"{did}: goal = {turns[0].goal}")
for t in turns:
    print(f"\n  turn {t.turn_index}")
    print(f"    user : {' '.join(t.user)}")
    print(f"    state: {t.gold_state.to_dict()['inform']}")
    print(f"    acts : {t.gold_acts}")
    print(f"    sys  : {' '.join(t.response)}")

banner("3. Responses are stored delexicalized")

print("the loader swaps entity values for domain_slot tags, so the")
print("generator learns value-independent templates:")
sample = next(t for t in turns if any("_" in w for w in t.response))
print("\n  delex:", " ".join(sample.response))
print("  raw  :", " ".join(sample.response_raw))

banner("4. The database answers state queries")

final = turns[-1].gold_state
domain = next(iter(final.inform))
rows = kb.query_state(final, domain)
print(f"final state narrows {domain} to {len(rows)} row(s):")
for row in rows[:3]:
    print("  ", row)
print("\nmodels never see raw rows, only a one-hot match-count bucket per")
print("domain (0, 1, 2-3, 4-5, 6-10, >10 matches):")
per_domain = kb.db_vector(final).reshape(ontology.n_domains, -1)
for name, block in zip(ontology.domains, per_domain):
    print(f"  {name:>8}: {block.astype(int).tolist()}")
