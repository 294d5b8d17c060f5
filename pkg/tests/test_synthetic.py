"""Generated corpus: determinism, goal satisfiability, oracle-agent scores."""

import json

import pytest

from taskdial.corpus import build_matcher, load_corpus
from taskdial.inference import DialogueRecord, ReplayTurn
from taskdial.kb import KB
from taskdial.metrics import score_replay
from taskdial.synthetic import SyntheticSpec, generate, synthetic_ontology, write_corpus


def test_same_seed_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    spec = SyntheticSpec(n_dialogues=6, seed=3)
    write_corpus(a, spec)
    write_corpus(b, spec)
    for rel in ("data.json", "synthetic.json", "db/eatery_db.tsv", "db/venue_db.tsv"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_different_seed_differs(tmp_path):
    d1 = generate(SyntheticSpec(n_dialogues=6, seed=3))["data"]
    d2 = generate(SyntheticSpec(n_dialogues=6, seed=4))["data"]
    assert json.dumps(d1, sort_keys=True) != json.dumps(d2, sort_keys=True)


def test_layout_and_ids(tmp_path):
    out = tmp_path / "corp"
    bundle = write_corpus(out, SyntheticSpec(n_dialogues=5, seed=1))
    assert (out / "data.json").exists()
    assert (out / "synthetic.json").exists()
    assert (out / "db" / "eatery_db.tsv").exists()
    assert (out / "db" / "venue_db.tsv").exists()
    assert sorted(bundle["data"]) == [f"SYN{i:04d}.json" for i in range(5)]
    manifest = json.loads((out / "synthetic.json").read_text())
    assert manifest["n_dialogues"] == 5 and manifest["seed"] == 1


def test_multi_domain_cadence():
    spec = SyntheticSpec(n_dialogues=9, multi_domain_every=3, seed=5)
    data = generate(spec)["data"]
    for i, (did, record) in enumerate(sorted(data.items())):
        expect_multi = (i + 1) % 3 == 0
        assert (len(record["goal"]) == 2) == expect_multi, did


def test_corpus_loads_clean_and_states_validate(synth_bundle):
    corpus, onto = synth_bundle["corpus"], synth_bundle["ontology"]
    assert not corpus.skipped
    assert corpus.n_dialogues == 10
    for turn in corpus.turns:
        turn.gold_state.validate(onto)
        turn.prev_state.validate(onto)
        # states only accumulate: everything known before stays known
        for d, slots in turn.prev_state.inform.items():
            for s, v in slots.items():
                assert turn.gold_state.value(d, s) == v


def test_goals_are_satisfiable(synth_bundle):
    corpus, kb = synth_bundle["corpus"], synth_bundle["kb"]
    for did, turns in corpus.dialogues.items():
        goal = turns[0].goal
        assert goal, did
        final = turns[-1].gold_state
        for domain, spec in goal.items():
            constraints = spec.get("constraints", {})
            assert constraints, (did, domain)
            goal_rows = kb.query(domain, dict(constraints))
            assert goal_rows, (did, domain)
            # the final gold state narrows to rows inside the goal set
            state_rows = kb.query_state(final, domain)
            assert state_rows, (did, domain)
            assert all(r in goal_rows for r in state_rows), (did, domain)


def _gold_replay(corpus):
    records = []
    for did in sorted(corpus.dialogues):
        turns = [
            ReplayTurn(
                turn_index=t.turn_index, user=t.user, gold_state=t.gold_state,
                pred_state=t.gold_state.copy(), gold_acts=sorted(t.gold_acts),
                pred_acts=sorted(t.gold_acts), response_gold=t.response,
                response_pred=list(t.response),
            )
            for t in corpus.dialogues[did]
        ]
        records.append(DialogueRecord(did, corpus.dialogues[did][0].goal, turns))
    return records


def test_oracle_agent_scores_perfectly(synth_bundle):
    """An agent replaying the gold transcripts must saturate every metric.

    This pins the corpus generator, the loader, the delexicalizer, and
    the completion checker to one another: a regression in any of them
    breaks the 1.0s.
    """
    report = score_replay(_gold_replay(synth_bundle["corpus"]),
                          synth_bundle["kb"], synth_bundle["ontology"], "e2e")
    summary = report.summary()
    assert set(summary) == {"joint_acc", "slot_acc", "request_f1", "inform", "success", "bleu", "act_match"}
    for name, value in summary.items():
        assert value == pytest.approx(1.0), name
    assert report.excluded_dialogues == 0


def test_oracle_agent_perfect_at_other_sizes(tmp_path):
    out = tmp_path / "big"
    write_corpus(out, SyntheticSpec(n_dialogues=24, rows_per_domain=6, seed=2))
    onto = synthetic_ontology()
    kb = KB.from_dir(onto, out / "db")
    corpus = load_corpus(out / "data.json", onto, build_matcher(kb))
    assert not corpus.skipped
    report = score_replay(_gold_replay(corpus), kb, onto, "e2e")
    for name, value in report.summary().items():
        assert value == pytest.approx(1.0), name
