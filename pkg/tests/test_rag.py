from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mock_gateway, rule
from rag_oracles import oracle_topk, random_index
from subqrag.decompose import Decomposition
from subqrag.domain import Chunk, MainQuestion, SubQuestion, SubQuestionType
from subqrag.gateway import Gateway, MockProvider, MockRule, ResponseCache
from subqrag.rag import (
    PooledChunk,
    RagConfig,
    RetrievalError,
    Strategy,
    StrategyError,
    VectorIndex,
    build_index,
    generate_answer,
    m2_query,
    m3_context,
    pool_retrievals,
    rerank_pool,
    retrieve,
    run_baseline,
    run_m1,
    run_m2,
    run_m3,
    run_m4,
    run_strategy,
    search,
    window_chunks,
)
from subqrag.records import IngestionError

CORE, BG = SubQuestionType.CORE, SubQuestionType.BACKGROUND
Q = MainQuestion("q", "Main question?")


def chunks(n: int, qid: str = "q") -> list[Chunk]:
    return [Chunk(f"c{i:02d}", qid, f"passage number {i} about topic {i}") for i in range(n)]


def decomposition(n_core: int, n_bg: int = 0) -> Decomposition:
    sqs = [SubQuestion(f"q/sq{i}", "q", f"Core question {i}?", CORE) for i in range(n_core)]
    sqs += [SubQuestion(f"q/bg{i}", "q", f"Background question {i}?", BG) for i in range(n_bg)]
    return Decomposition("q", tuple(sqs))


def test_orthogonal_case():
    gw = mock_gateway([MockRule("query", embedding=[1, 0]), MockRule("A text", embedding=[1, 0]),
                       MockRule("B text", embedding=[0, 1])], dimension=2)
    index = build_index(gw, [Chunk("a", "q", "A text"), Chunk("b", "q", "B text")])
    assert retrieve(gw, index, "query", 1) == [("a", 1.0)]


def test_saturation():
    gw = mock_gateway()
    index = build_index(gw, chunks(3))
    assert len(index) == 3
    assert sorted(cid for cid, _ in retrieve(gw, index, "topic", 10)) == ["c00", "c01", "c02"]


def test_build_index_errors():
    gw = mock_gateway()
    with pytest.raises(IngestionError):
        build_index(gw, [Chunk("a", "q", "x"), Chunk("a", "q", "y")])
    with pytest.raises(RetrievalError):
        build_index(gw, [])


def test_rebuild_warm_cache(tmp_path):
    first = build_index(Gateway(MockProvider(), ResponseCache(tmp_path)), chunks(5))
    gw = Gateway(MockProvider(), ResponseCache(tmp_path))
    second = build_index(gw, chunks(5))
    assert np.array_equal(first.vectors, second.vectors) and first.chunks == second.chunks
    assert gw.stats.embed_calls == 0


def test_ties_break_by_id():
    index = VectorIndex((Chunk("b", "q", "x"), Chunk("a", "q", "y"), Chunk("c", "q", "z")),
                        np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 0.0]]))
    assert [cid for cid, _ in search(index, [1.0, 1.0], 3)] == ["a", "b", "c"]


def test_zero_vectors_score_zero():
    index = VectorIndex((Chunk("a", "q", "x"), Chunk("b", "q", "y")), np.array([[0.0, 0.0], [-1.0, 0.0]]))
    assert search(index, [1.0, 0.0], 2) == [("a", 0.0), ("b", -1.0)]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_search_matches_oracle(seed):
    rng = random.Random(seed)
    index, ids, vectors, query = random_index(rng)
    k = rng.randint(1, len(ids) + 3)
    got = search(index, [float(x) for x in query], k)
    want = oracle_topk(ids, vectors, query, k)
    assert [cid for cid, _ in got] == [cid for cid, _ in want]
    assert all(abs(s - float(w)) <= 1e-12 for (_, s), (_, w) in zip(got, want))


def test_generate_answer_prompt():
    gw = mock_gateway([rule("", "ANSWER")])
    ctx = chunks(10)
    ans = generate_answer(gw, Q, ctx, RagConfig(strategy=Strategy.BASELINE), system_id="baseline")
    assert ans.text == "ANSWER" and ans.system_id == "baseline"
    prompt = gw.provider.calls[0].text
    positions = [prompt.index(c.text) for c in ctx]
    assert positions == sorted(positions)
    assert "around 300 words" in prompt
    assert "Question: Main question?\nAnswer:" in prompt


def test_generate_needs_context():
    with pytest.raises(RetrievalError):
        generate_answer(mock_gateway([rule("", "x")]), Q, [], RagConfig())


def _contexts(call_text: str) -> str:
    return call_text.split("Context:\n", 1)[1].split("\n\nQuestion:", 1)[0]


def test_m1_same_retrieval_as_baseline_with_definition():
    gw = mock_gateway([rule("", "ANSWER")])
    index = build_index(gw, chunks(15))
    run_baseline(gw, Q, index, RagConfig())
    run_m1(gw, Q, index, RagConfig())
    base, m1 = gw.provider.calls[-2].text, gw.provider.calls[-1].text
    assert _contexts(base) == _contexts(m1)
    assert "Definition of core sub-questions" in m1
    assert "cover as many core sub-questions as possible" in m1


def test_m2_query_and_prompt():
    d = decomposition(3, 2)
    query = m2_query(Q, d)
    assert all(sq.text in query for sq in d.core)
    assert "Background question 0?" not in query
    gw = mock_gateway([rule("", "ANSWER")])
    index = build_index(gw, chunks(5))
    run_m2(gw, Q, d, index, RagConfig())
    assert query in gw.provider.embed_calls
    prompt = gw.provider.calls[-1].text
    assert all(f"- {sq.text}" in prompt for sq in d.core)


def test_m2_without_core_equals_baseline():
    gw = mock_gateway([rule("", "ANSWER")])
    index = build_index(gw, chunks(5))
    base = run_baseline(gw, Q, index, RagConfig())
    m2 = run_m2(gw, Q, decomposition(0, 2), index, RagConfig())
    assert m2.text == base.text
    # identical prompt, so the second generation is a cache hit
    assert gw.stats.provider_calls == 1 and gw.stats.cache_hits == 1


def _m3_setup():
    texts = {"x": "chunk X covers both", "y": "chunk Y covers one", "z": "chunk Z covers none"}
    d = decomposition(2)
    rules = [
        rule([f"Piece of text: {texts['x']}", "Question: Core question 0?"], {"covered": True, "quote": "chunk X"}),
        rule([f"Piece of text: {texts['x']}", "Question: Core question 1?"], {"covered": True, "quote": "covers both"}),
        rule([f"Piece of text: {texts['y']}", "Question: Core question 1?"], {"covered": True, "quote": "chunk Y"}),
        rule("Piece of text:", "None"),
        rule("", "ANSWER"),
        # z is the closest to the question, x the farthest
        MockRule(Q.text, embedding=[1, 0]), MockRule(texts["z"], embedding=[1, 0]),
        MockRule(texts["y"], embedding=[1, 1]), MockRule(texts["x"], embedding=[0, 1]),
    ]
    gw = mock_gateway(rules, dimension=2)
    index = build_index(gw, [Chunk(k, "q", v) for k, v in texts.items()])
    return gw, index, d


def test_m3_rerank_example():
    gw, index, d = _m3_setup()
    ranked = m3_context(gw, Q, d, index, RagConfig(rerank_top_k=2))
    assert [p.chunk_id for p in ranked] == ["x", "y"]
    assert [p.coverage for p in ranked] == [2, 1]
    run_m3(gw, Q, d, index, RagConfig(rerank_top_k=2))
    prompt = gw.provider.calls[-1].text
    assert prompt.index("chunk X") < prompt.index("chunk Y") and "chunk Z" not in prompt


def test_m3_call_count():
    gw, index, d = _m3_setup()
    m3_context(gw, Q, d, index, RagConfig())
    # one coverage judgment per (pooled chunk, core sub-question)
    assert gw.stats.provider_calls == 3 * 2
    assert gw.stats.embed_calls == 3 + 1 + 2


def test_m3_zero_coverage_falls_back_to_score():
    gw = mock_gateway([rule("", "None")])
    index = build_index(gw, chunks(6))
    ranked = m3_context(gw, Q, decomposition(2), index, RagConfig(top_k=3))
    assert all(p.coverage == 0 for p in ranked)
    assert [p.sort_key for p in ranked] == sorted(p.sort_key for p in ranked)


def test_pool_dedup_keeps_best_score():
    pool = pool_retrievals([[("a", 0.5), ("b", 0.2)], [("a", 0.9)], [("a", 0.1), ("c", 0.3)]])
    assert pool == {"a": 0.9, "b": 0.2, "c": 0.3}


def test_rerank_total_order():
    pool = [PooledChunk("b", 0.5, 1), PooledChunk("a", 0.5, 1), PooledChunk("c", 0.9, 0), PooledChunk("d", 0.1, 2)]
    assert [p.chunk_id for p in rerank_pool(pool, 10)] == ["d", "a", "b", "c"]


def test_m4_calls_and_synthesis():
    d = decomposition(3, 1)
    rules = [rule(f"Question: {sq.text}\nAnswer:", f"SUB-ANSWER {i}") for i, sq in enumerate(d.core)]
    rules.append(rule("Final answer:", "FINAL"))
    gw = mock_gateway(rules)
    index = build_index(gw, chunks(4))
    ans = run_m4(gw, Q, d, index, RagConfig())
    assert ans.text == "FINAL" and ans.system_id == "m4"
    assert gw.stats.provider_calls == 4
    synth = gw.provider.calls[-1].text
    assert all(f"SUB-ANSWER {i}" in synth for i in range(3))
    assert "Original question: Main question?" in synth


def test_m4_requires_core():
    gw = mock_gateway([rule("", "x")])
    with pytest.raises(StrategyError):
        run_m4(gw, Q, decomposition(0, 1), build_index(gw, chunks(2)), RagConfig())


def test_strategies_need_decomposition():
    gw = mock_gateway([rule("", "x")])
    with pytest.raises(StrategyError):
        run_strategy(gw, Strategy.M3, Q, build_index(gw, chunks(2)), RagConfig())


@pytest.mark.parametrize("strategy", list(Strategy))
def test_strategies_deterministic(strategy, tmp_path):
    def once(cache):
        gw = Gateway(MockProvider([rule("Piece of text: passage number 1", {"covered": True, "quote": "passage"}),
                                   rule("Piece of text:", "None"), rule("", "ANSWER")]), cache)
        return run_strategy(gw, strategy, Q, build_index(gw, chunks(6)), RagConfig(top_k=3), decomposition(2, 1))
    assert once(ResponseCache()) == once(ResponseCache())


def test_window_chunks():
    long = Chunk("doc", "q", " ".join(f"w{i}" for i in range(1000)), "src")
    out = window_chunks([long, Chunk("short", "q", "tiny")], size=512, overlap=64)
    assert [c.id for c in out] == ["doc#w0", "doc#w1", "doc#w2", "short"]
    assert out[1].text.split()[0] == "w448" and out[1].text.split()[-1] == "w959"
    assert out[2].text.split()[0] == "w896" and out[2].text.split()[-1] == "w999"
    covered = set()
    for c in out[:3]:
        covered.update(c.text.split())
    assert len(covered) == 1000


def test_config_validation():
    with pytest.raises(Exception):
        RagConfig(top_k=0)
    assert RagConfig(top_k=7).rerank_k == 7
    assert RagConfig(top_k=7, rerank_top_k=3).rerank_k == 3
