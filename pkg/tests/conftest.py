"""Shared fixtures: small ontologies, toy KBs, and a synthetic corpus."""

import pytest

from taskdial.corpus import BLANK, DialogueTurn, Vocab, build_matcher, build_vocab, load_corpus
from taskdial.kb import KB, EntityTable
from taskdial.model import DialogueModel, ModelConfig
from taskdial.ontology import DialogueState, Ontology, Slot
from taskdial.synthetic import SyntheticSpec, synthetic_ontology, write_corpus


def small_cfg(**kw):
    base = dict(
        mode="e2e", d=16, n_heads=2, n_slot_blocks=1, n_domain_blocks=1,
        n_gen_blocks=1, dropout=0.0, seed=3,
    )
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def mini_ontology():
    """Restaurant/attraction ontology matching the worked state example."""
    slots = [
        Slot("pricerange", informable=True),
        Slot("area", informable=True),
        Slot("name", informable=True),
        Slot("address", requestable=True),
        Slot("phone", requestable=True),
    ]
    pairs = [
        ("restaurant", "pricerange"),
        ("restaurant", "area"),
        ("restaurant", "name"),
        ("restaurant", "address"),
        ("restaurant", "phone"),
        ("attraction", "area"),
        ("attraction", "name"),
        ("attraction", "address"),
        ("attraction", "phone"),
    ]
    acts = ["inform-name", "inform-area", "inform-phone", "inform-address", "request-area", "bye-none"]
    return Ontology(domains=["restaurant", "attraction"], slots=slots, pairs=pairs, acts=acts)


@pytest.fixture
def toy_kb(mini_ontology):
    restaurant = EntityTable(
        "restaurant",
        ["id", "name", "pricerange", "area", "address", "phone"],
        [
            {"id": "r1", "name": "fizbillies restaurant", "pricerange": "expensive", "area": "centre", "address": "52 trumpington street", "phone": "01223352500"},
            {"id": "r2", "name": "pizza hut city centre", "pricerange": "cheap", "area": "centre", "address": "regent street", "phone": "01223323737"},
            {"id": "r3", "name": "pizza hut", "pricerange": "cheap", "area": "south", "address": "cambridge leisure park", "phone": "01223412430"},
        ],
    )
    attraction = EntityTable(
        "attraction",
        ["id", "name", "area", "address", "phone"],
        [
            {"id": "a1", "name": "kings hedges learner pool", "area": "north", "address": "jedburgh court", "phone": "01223353248"},
            {"id": "a2", "name": "old schools", "area": "centre", "address": "trinity lane", "phone": "01223332320"},
        ],
    )
    return KB(mini_ontology, {"restaurant": restaurant, "attraction": attraction})


@pytest.fixture
def vocabs(mini_ontology):
    words = [
        "hello", "i", "want", "cheap", "food", "in", "centre", "alpha", "house",
        "is", "nice", "expensive", "north",
    ]
    always = (
        [BLANK, "<usr>", "<sys>", "<req>", "none", "dontcare", "restaurant_name"]
        + list(mini_ontology.domains)
        + [s.name for s in mini_ontology.slots]
    )
    src = Vocab.build({w: 5 for w in words}, always=tuple(always))
    res = Vocab.build(
        {w: 5 for w in ["restaurant_name", "is", "a", "nice", "place", ".", "hello", "how", "help", "?"]},
        always=(BLANK,),
    )
    return src, res


@pytest.fixture
def model(mini_ontology, vocabs):
    m = DialogueModel(small_cfg(), mini_ontology, *vocabs)
    m.eval_mode()
    return m


@pytest.fixture
def turns(mini_ontology):
    st1 = DialogueState(
        inform={"restaurant": {"pricerange": ("cheap",), "area": ("centre",)}},
        request={"restaurant": {"phone"}},
    )
    t1 = DialogueTurn(
        "d1", 1, ["i", "want", "cheap", "food"], [], [], DialogueState(), st1,
        ["inform-name"], ["restaurant_name", "is", "a", "nice", "place", "."],
        ["alpha", "house", "is", "nice"], {},
    )
    t2 = DialogueTurn(
        "d1", 2, ["hello"], t1.response, [("usr", t1.user), ("sys", t1.response)],
        st1, st1, ["bye-none"], ["hello", "how", "help", "?"], ["hello"], {},
    )
    return [t1, t2]


@pytest.fixture
def small_kb(mini_ontology):
    rest = EntityTable(
        "restaurant",
        ["id", "name", "pricerange", "area"],
        [
            {"id": "r1", "name": "alpha house", "pricerange": "cheap", "area": "centre"},
            {"id": "r2", "name": "beta inn", "pricerange": "expensive", "area": "north"},
        ],
    )
    return KB(mini_ontology, {"restaurant": rest})


@pytest.fixture(scope="session")
def synth_bundle(tmp_path_factory):
    """A generated 10-dialogue corpus, loaded: shared read-only by tests."""
    out = tmp_path_factory.mktemp("synth")
    write_corpus(out, SyntheticSpec(n_dialogues=10, seed=11))
    ontology = synthetic_ontology()
    kb = KB.from_dir(ontology, out / "db")
    corpus = load_corpus(out / "data.json", ontology, build_matcher(kb))
    assert not corpus.skipped
    src_vocab, res_vocab = build_vocab(corpus, ontology)
    return {
        "dir": out, "ontology": ontology, "kb": kb, "corpus": corpus,
        "src_vocab": src_vocab, "res_vocab": res_vocab,
    }


def pytest_runtest_logreport(report):
    """Print one verdict line per acceptance criterion test."""
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" and report.passed:
        print(f"\nACCEPTANCE PASS: {name}")
    elif report.failed:
        print(f"\nACCEPTANCE FAIL: {name}")
    elif report.skipped:
        print(f"\nACCEPTANCE SKIP: {name}")
