"""Corpus loading, delexicalization, context assembly, vocab, cache."""

import json

import numpy as np
import pytest

from taskdial.corpus import (
    BLANK,
    BOS_ID,
    EOS_ID,
    PAD_ID,
    RESERVED,
    SYS_SEP,
    UNK_ID,
    USR_SEP,
    Corpus,
    DelexMatcher,
    Vocab,
    build_matcher,
    build_vocab,
    delexicalize,
    load_cache,
    load_corpus,
    make_context,
    save_cache,
    tokenize,
    build_multiwoz_ontology,
)
from taskdial.errors import DataError
from taskdial.kb import KB, EntityTable
from taskdial.ontology import DialogueState, Ontology, Slot


def test_tokenize_case_folds_and_splits_punctuation():
    assert tokenize("Hello, World!") == ["hello", ",", "world", "!"]
    assert tokenize("tr8259 at 18:30.") == ["tr8259", "at", "18", ":", "30", "."]
    assert tokenize("don't") == ["don't"]
    assert tokenize("train_id stays") == ["train_id", "stays"]
    assert tokenize("") == []


# -- delexicalization ----------------------------------------------------------


def test_delex_worked_train_example():
    onto = Ontology(["train"], [Slot("departure", informable=True)], [("train", "departure")])
    table = EntityTable("train", ["id", "departure"], [{"id": "tr8259", "departure": "cambridge"}])
    matcher = build_matcher(KB(onto, {"train": table}))
    toks = tokenize("the train id is tr8259 departing from cambridge")
    assert delexicalize(toks, matcher) == tokenize(
        "the train id is train_id departing from train_departure"
    )


def test_delex_no_entities_unchanged(toy_kb):
    matcher = build_matcher(toy_kb)
    toks = tokenize("hello there , how can i help ?")
    assert delexicalize(toks, matcher) == toks


def test_delex_longest_match_wins(toy_kb):
    matcher = build_matcher(toy_kb)
    # "pizza hut city centre" and "pizza hut" are both names; the longer
    # candidate must absorb the whole span
    toks = tokenize("try pizza hut city centre tonight")
    assert delexicalize(toks, matcher) == ["try", "restaurant_name", "tonight"]
    toks2 = tokenize("try pizza hut tonight")
    assert delexicalize(toks2, matcher) == ["try", "restaurant_name", "tonight"]


def test_delex_longest_match_against_bruteforce(toy_kb):
    # brute-force oracle: at each position try candidates by every
    # ordering; longest-match greedy must equal taking max length first
    matcher = build_matcher(toy_kb)
    values = []
    for domain in toy_kb.domains_with_db():
        t = toy_kb.table(domain)
        for col in t.columns:
            for row in t.rows:
                if col in row:
                    values.append((tuple(tokenize(str(row[col]))), f"{domain}_{col}"))
    toks = tokenize("pizza hut city centre is in the centre near old schools")

    def oracle(tokens):
        out, i = [], 0
        while i < len(tokens):
            best = None
            for vt, tag in values:
                if tuple(tokens[i : i + len(vt)]) == vt:
                    if best is None or len(vt) > len(best[0]):
                        best = (vt, tag)
            if best:
                out.append(best[1])
                i += len(best[0])
            else:
                out.append(tokens[i])
                i += 1
        return out

    assert delexicalize(toks, matcher) == oracle(toks)


def test_delex_idempotent(toy_kb):
    matcher = build_matcher(toy_kb)
    for text in [
        "fizbillies restaurant is in the centre , phone 01223352500",
        "try pizza hut city centre or old schools",
        "nothing matches here",
    ]:
        once = delexicalize(tokenize(text), matcher)
        assert delexicalize(once, matcher) == once


def test_matcher_deterministic_tiebreak():
    m = DelexMatcher()
    m.add(["centre"], "restaurant_area")
    m.add(["centre"], "attraction_area")
    m.freeze()
    # first insertion wins ties at equal length
    assert m.replace(["centre"]) == ["restaurant_area"]


# -- corpus loading -------------------------------------------------------------


def sample_data():
    return {
        "d001.json": {
            "goal": {
                "restaurant": {
                    "info": {"pricerange": "expensive", "area": "centre"},
                    "reqt": ["address"],
                }
            },
            "log": [
                {"text": "i want an expensive restaurant in the centre", "metadata": {}},
                {
                    "text": "fizbillies restaurant is a nice place .",
                    "metadata": {"restaurant": {"semi": {"pricerange": "expensive", "area": "centre"}, "book": {}}},
                    "dialog_act": {"Restaurant-Inform": [["name", "fizbillies restaurant"]]},
                },
                {
                    "text": "what is their address ?",
                    "metadata": {},
                    "dialog_act": {"Restaurant-Request": [["address", "?"]]},
                },
                {
                    "text": "it is at 52 trumpington street .",
                    "metadata": {"restaurant": {"semi": {"pricerange": "expensive", "area": "centre"}, "book": {}}},
                    "dialog_act": {"Restaurant-Inform": [["address", "52 trumpington street"]]},
                },
            ],
        },
        "d002.json": {"goal": {}, "log": [{"text": "hi", "metadata": {}}]},
    }


@pytest.fixture
def loaded(tmp_path, mini_ontology, toy_kb):
    p = tmp_path / "data.json"
    p.write_text(json.dumps(sample_data()))
    matcher = build_matcher(toy_kb)
    return load_corpus(p, mini_ontology, matcher)


def test_load_corpus_turn_structure(loaded, mini_ontology):
    corpus = loaded
    assert corpus.n_dialogues == 1
    assert len(corpus.skipped) == 1 and corpus.skipped[0][0] == "d002.json"
    t1, t2 = corpus.dialogues["d001.json"]
    assert t1.turn_index == 1 and t2.turn_index == 2
    assert t1.prev_response == [] and t1.history == []
    assert t1.prev_state.is_empty()
    assert t1.gold_state.inform["restaurant"]["pricerange"] == ("expensive",)
    assert t1.gold_state.request == {}
    assert t1.gold_acts == ["inform-name"]
    assert t1.response[0] == "restaurant_name"
    assert t2.prev_state == t1.gold_state
    assert t2.gold_state.request == {"restaurant": {"address"}}
    assert t2.gold_acts == ["inform-address"]
    assert "restaurant_address" in t2.response
    assert t2.history == [("usr", t1.user), ("sys", t1.response)]
    for t in (t1, t2):
        t.gold_state.validate(mini_ontology)
        assert t.goal["restaurant"]["constraints"]["pricerange"] == "expensive"
        assert t.goal["restaurant"]["requested"] == ["address"]


def test_load_corpus_empty_file(tmp_path, mini_ontology):
    p = tmp_path / "data.json"
    p.write_text("")
    corpus = load_corpus(p, mini_ontology)
    assert corpus.turns == [] and corpus.skipped == []


def test_load_corpus_include_filter(tmp_path, mini_ontology, toy_kb):
    p = tmp_path / "data.json"
    p.write_text(json.dumps(sample_data()))
    corpus = load_corpus(p, mini_ontology, build_matcher(toy_kb), include={"d002.json"})
    assert corpus.n_dialogues == 0 and len(corpus.skipped) == 1


def test_act_vector(loaded, mini_ontology):
    t1 = loaded.turns[0]
    v = t1.act_vector(mini_ontology)
    assert v.shape == (mini_ontology.n_acts,)
    assert v.sum() == 1.0
    assert v[mini_ontology.act_index("inform-name")] == 1.0


def test_mean_domains_per_dialogue(loaded):
    assert loaded.mean_domains_per_dialogue() == 1.0


# -- context -------------------------------------------------------------------


def test_make_context_last_response(loaded):
    t1, t2 = loaded.turns
    assert make_context(t1, "last-response") == [BLANK]
    assert make_context(t2, "last-response") == t1.response


def test_make_context_full_history_token_count(loaded):
    t1, t2 = loaded.turns
    assert make_context(t1, "full-history") == [BLANK]
    ctx = make_context(t2, "full-history")
    assert ctx == [USR_SEP] + t1.user + [SYS_SEP] + t1.response
    assert len(ctx) == len(t1.user) + len(t1.response) + 2


def test_make_context_bad_mode(loaded):
    with pytest.raises(DataError):
        make_context(loaded.turns[0], "everything")


# -- vocab ----------------------------------------------------------------------


def test_vocab_reserved_block_and_unknowns():
    v = Vocab.build({"apple": 3, "pear": 1}, min_count=2, always=("banana",))
    assert v.to_list()[:5] == list(RESERVED)
    assert v.index("apple") != UNK_ID
    assert v.index("pear") == UNK_ID
    assert v.index("banana") != UNK_ID
    ids = v.encode(["apple", "mystery"])
    assert ids[1] == UNK_ID
    assert v.decode(ids)[0] == "apple"


def test_vocab_rejects_bad_reserved():
    with pytest.raises(DataError):
        Vocab(["<pad>", "<unk>", "x"])


def test_build_vocab_covers_ontology_and_values(loaded, mini_ontology):
    src, res = build_vocab(loaded, mini_ontology, min_count=1)
    for tok in list(mini_ontology.domains) + [s.name for s in mini_ontology.slots]:
        assert tok in src
    for tok in ("expensive", "centre", "<req>", "none", BLANK):
        assert tok in src
    assert "restaurant_name" in res and "restaurant_address" in res
    # context side sees delexicalized responses, so tags are source tokens too
    assert "restaurant_name" in src
    assert "what" in src  # user text
    assert PAD_ID == src.index("<pad>") and BOS_ID == res.index("<bos>")


def test_build_vocab_min_count_keeps_gold_values(loaded, mini_ontology):
    src, _ = build_vocab(loaded, mini_ontology, min_count=50)
    # free text drops below the threshold, gold state values never do
    assert src.index("want") == UNK_ID
    assert src.index("expensive") != UNK_ID


# -- cache -----------------------------------------------------------------------


def test_cache_roundtrip(tmp_path, loaded, mini_ontology):
    src, res = build_vocab(loaded, mini_ontology)
    cache = tmp_path / "cache"
    save_cache(cache, loaded, mini_ontology, src, res, source_note="unit-test")
    corpus2, onto2, src2, res2, manifest = load_cache(cache)
    assert onto2 == mini_ontology
    assert src2.to_list() == src.to_list()
    assert res2.to_list() == res.to_list()
    assert manifest["source_note"] == "unit-test"
    assert len(corpus2.turns) == len(loaded.turns)
    for a, b in zip(corpus2.turns, loaded.turns):
        assert a.to_dict() == b.to_dict()
    assert corpus2.skipped == loaded.skipped


def test_cache_detects_tampering(tmp_path, loaded, mini_ontology):
    src, res = build_vocab(loaded, mini_ontology)
    cache = tmp_path / "cache"
    save_cache(cache, loaded, mini_ontology, src, res)
    body = (cache / "turns.jsonl").read_text()
    (cache / "turns.jsonl").write_text(body.replace("expensive", "cheap"))
    with pytest.raises(DataError, match="fingerprint"):
        load_cache(cache)


def test_cache_rejects_other_version(tmp_path, loaded, mini_ontology):
    src, res = build_vocab(loaded, mini_ontology)
    cache = tmp_path / "cache"
    save_cache(cache, loaded, mini_ontology, src, res)
    manifest = json.loads((cache / "manifest.json").read_text())
    manifest["version"] = 99
    (cache / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataError, match="version"):
        load_cache(cache)


# -- published-dataset ontology ---------------------------------------------------


def test_multiwoz_ontology_shape():
    onto = build_multiwoz_ontology()
    assert onto.n_domains == 7
    assert set(onto.domains) == {
        "restaurant", "hotel", "attraction", "train", "taxi", "police", "hospital",
    }
    inform = [s for s in onto.slots if s.informable]
    request = [s for s in onto.slots if s.requestable]
    assert len(inform) + len(request) == onto.n_slots
    assert all(s.name.startswith("inf_") for s in inform)
    assert all(s.name.startswith("req_") for s in request)
    assert len(request) == 11
    assert onto.valid_pair("restaurant", "inf_food")
    assert not onto.valid_pair("attraction", "inf_food")
    assert onto.slot("inf_area").key == "area"
