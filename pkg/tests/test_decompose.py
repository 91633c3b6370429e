from __future__ import annotations

import pytest

from conftest import mock_gateway, rule
from subqrag.decompose import (
    ClassificationError,
    Decomposition,
    DecompositionError,
    classify_subquestion,
    decompose_question,
    dedupe,
    generate_subquestions,
    normalize_question,
)
from subqrag.domain import MainQuestion, SubQuestion, SubQuestionType
from subqrag.gateway import Gateway, MockProvider, ResponseCache
from subqrag.samples import CARBON_CYCLE, MALNUTRITION, READING, SAMPLES

CORE, BG, FU = SubQuestionType.CORE, SubQuestionType.BACKGROUND, SubQuestionType.FOLLOW_UP


def sample_rules(sample):
    rules = [rule(f"Complex question: {sample.question}\nCollection of sub-questions:",
                  {"sub_questions": [t for t, _ in sample.labeled()]})]
    rules += [rule(f"Sub-question: {t}\nType classification:", {"type": lbl.value})
              for t, lbl in sample.labeled()]
    return rules


def test_generate_carbon_cycle():
    gw = mock_gateway(sample_rules(CARBON_CYCLE))
    texts = generate_subquestions(gw, MainQuestion("q1", CARBON_CYCLE.question))
    assert "How does deforestation affect the carbon cycle?" in texts
    assert len(texts) == 20


def test_generate_fresh_or_frozen():
    q = "Are fresh or frozen vegetables healthier?"
    sub = "How does the freezing process affect the nutritional content of vegetables?"
    gw = mock_gateway([rule(f"Complex question: {q}", {"sub_questions": [sub, "Which is cheaper?"]})])
    assert sub in generate_subquestions(gw, MainQuestion("q", q))


def test_generate_dedupes_exact_duplicate():
    gw = mock_gateway([rule("", {"sub_questions": ["What is X?", "What is Y?", "What is X?"]})])
    assert generate_subquestions(gw, MainQuestion("q", "Q?")) == ["What is X?", "What is Y?"]


def test_generate_numbered_list_fallback():
    gw = mock_gateway([rule("", "1. What is X?\n2) What is Y?\n- what is x")])
    assert generate_subquestions(gw, MainQuestion("q", "Q?")) == ["What is X?", "What is Y?"]


def test_generate_unparseable_after_reask():
    gw = mock_gateway([rule("", "I cannot help with that")])
    with pytest.raises(DecompositionError):
        generate_subquestions(gw, MainQuestion("q", "Q?"))
    assert gw.stats.provider_calls == 2


def test_normalization():
    assert normalize_question("  What, is  X?? ") == "what is x"
    assert dedupe(["What is X?", "what is x", "What is Y?"]) == ["What is X?", "What is Y?"]


@pytest.mark.parametrize("sample,sub,expected", [
    (MALNUTRITION, "What is the definition of malnutrition?", BG),
    (READING, "How does age affect the ability to learn from reading?", FU),
    (CARBON_CYCLE, "How does deforestation affect the carbon cycle?", CORE),
])
def test_classify_examples(sample, sub, expected):
    gw = mock_gateway(sample_rules(sample))
    assert classify_subquestion(gw, MainQuestion("q", sample.question), sub) is expected


def test_classify_accepts_label_spellings():
    for raw in ("follow-up", "Follow_up", '{"type": "follow-up"}', "followup."):
        gw = mock_gateway([rule("", raw)])
        assert classify_subquestion(gw, MainQuestion("q", "Q?"), "S?") is FU


def test_classify_out_of_set_label():
    gw = mock_gateway([rule("", {"type": "tangential"})])
    with pytest.raises(ClassificationError):
        classify_subquestion(gw, MainQuestion("q", "Q?"), "S?")


def test_classify_prompt_has_few_shot_and_query():
    gw = mock_gateway([rule("", {"type": "core"})])
    classify_subquestion(gw, MainQuestion("q", "Main?"), "Sub?")
    text = gw.provider.calls[0].text
    assert "Complex question: Main?\nSub-question: Sub?\nType classification:" in text
    assert text.count("Example ") == 3


@pytest.mark.parametrize("sample,counts", [(CARBON_CYCLE, (12, 3, 5)), (READING, (13, 3, 4)),
                                           (MALNUTRITION, (11, 3, 6))])
def test_decompose_sample_counts(sample, counts):
    d = decompose_question(mock_gateway(sample_rules(sample)), MainQuestion("q1", sample.question))
    c = d.counts()
    assert (c[CORE], c[BG], c[FU]) == counts
    assert [sq.id for sq in d.subquestions] == [f"q1/sq{k}" for k in range(1, 21)]
    assert all(sq.parent_id == "q1" for sq in d.subquestions)


def test_decompose_minimal():
    gw = mock_gateway([rule("Collection of sub-questions", {"sub_questions": ["Only?"]}),
                       rule("", {"type": "core"})])
    d = decompose_question(gw, MainQuestion("q", "Q?"))
    assert len(d.subquestions) == 1 and d.subquestions[0].qtype is CORE


def test_decompose_drops_failed_classifications():
    gw = mock_gateway([rule("Collection of sub-questions", {"sub_questions": ["Good?", "Bad?"]}),
                       rule("Sub-question: Good?", {"type": "core"}),
                       rule("", "no idea")])
    d = decompose_question(gw, MainQuestion("q", "Q?"))
    assert [sq.text for sq in d.subquestions] == ["Good?"]


def test_decompose_all_failed():
    gw = mock_gateway([rule("Collection of sub-questions", {"sub_questions": ["Bad?"]}),
                       rule("", "no idea")])
    with pytest.raises(DecompositionError):
        decompose_question(gw, MainQuestion("q", "Q?"))


def test_warm_cache_replay_identical(tmp_path):
    q = MainQuestion("q1", CARBON_CYCLE.question)
    first = decompose_question(Gateway(MockProvider(sample_rules(CARBON_CYCLE)), ResponseCache(tmp_path)), q)
    replay_gw = Gateway(MockProvider([]), ResponseCache(tmp_path))
    second = decompose_question(replay_gw, q)
    assert second == first
    assert replay_gw.stats.provider_calls == 0


def test_type_buckets_partition():
    for sample in SAMPLES:
        d = decompose_question(mock_gateway(sample_rules(sample)), MainQuestion("q", sample.question))
        buckets = [sq.id for t in SubQuestionType for sq in d.of_type(t)]
        assert sorted(buckets) == sorted(sq.id for sq in d.subquestions)


def test_decomposition_invariants():
    sq = SubQuestion("q/sq1", "q", "A?", CORE)
    with pytest.raises(DecompositionError):
        Decomposition("q", ())
    with pytest.raises(DecompositionError):
        Decomposition("other", (sq,))
    with pytest.raises(DecompositionError):
        Decomposition("q", (sq, SubQuestion("q/sq2", "q", "a", CORE)))
