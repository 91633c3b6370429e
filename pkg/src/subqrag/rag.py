"""Reference RAG pipeline and the core-sub-question augmentation strategies."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import DEFAULT_MAX_JUDGE_CHARS, judge_coverage
from .decompose import Decomposition
from .domain import Chunk, LongFormAnswer, MainQuestion, SubQuestion, SubqragError, TargetKind, words_of
from .gateway import ConfigurationError, Gateway
from .records import IngestionError
from .templates import GENERATE, M1_INSTRUCTIONS, M2_INSTRUCTIONS, SYNTHESIZE, PromptTemplate, render

logger = logging.getLogger(__name__)


class RetrievalError(SubqragError):
    pass


class StrategyError(SubqragError):
    pass


class Strategy(enum.Enum):
    BASELINE = "baseline"
    M1 = "m1"
    M2 = "m2"
    M3 = "m3"
    M4 = "m4"


@dataclass(frozen=True)
class RagConfig:
    top_k: int = 10
    target_words: int = 300
    rerank_top_k: int | None = None
    strategy: Strategy = Strategy.BASELINE
    max_judge_chars: int = DEFAULT_MAX_JUDGE_CHARS

    def __post_init__(self) -> None:
        if self.top_k < 1 or self.target_words < 1:
            raise ConfigurationError("top_k and target_words must be >= 1")
        if self.rerank_top_k is not None and self.rerank_top_k < 1:
            raise ConfigurationError("rerank_top_k must be >= 1")

    @property
    def rerank_k(self) -> int:
        return self.rerank_top_k or self.top_k


def window_chunks(chunks: Sequence[Chunk], size: int = 512, overlap: int = 64) -> list[Chunk]:
    """Split chunks longer than ``size`` words into overlapping windows ``<id>#w<k>``."""
    if not 0 <= overlap < size:
        raise ValueError("need 0 <= overlap < size")
    out = []
    for c in chunks:
        words = words_of(c.text)
        if len(words) <= size:
            out.append(c)
            continue
        step = size - overlap
        starts = list(range(0, len(words) - overlap, step))
        for k, s in enumerate(starts):
            out.append(Chunk(f"{c.id}#w{k}", c.question_id, " ".join(words[s:s + size]), c.source))
    return out


@dataclass(frozen=True)
class VectorIndex:
    """Exact in-memory index; row ``i`` of ``vectors`` embeds ``chunks[i]``."""

    chunks: tuple[Chunk, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.chunks):
            raise ConfigurationError("index needs one embedding row per chunk")
        ids = [c.id for c in self.chunks]
        if len(set(ids)) != len(ids):
            raise IngestionError("duplicate chunk id in index")

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.chunks)

    def chunk(self, chunk_id: str) -> Chunk:
        for c in self.chunks:
            if c.id == chunk_id:
                return c
        raise KeyError(chunk_id)


def build_index(gateway: Gateway, chunks: Sequence[Chunk]) -> VectorIndex:
    if not chunks:
        raise RetrievalError("cannot build an index from zero chunks")
    seen = set()
    for c in chunks:
        if c.id in seen:
            raise IngestionError(f"duplicate chunk id {c.id!r}")
        seen.add(c.id)
    vectors = gateway.embed_many([c.text for c in chunks])
    return VectorIndex(tuple(chunks), np.asarray(vectors, dtype=np.float64))


def search(index: VectorIndex, query_vec: Sequence[float], k: int) -> list[tuple[str, float]]:
    """Top-``k`` by cosine similarity, descending; equal scores ordered by chunk id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise RetrievalError("index is empty")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise ConfigurationError(f"query dimension {q.shape} does not match index {index.dimension}")
    dots = index.vectors @ q
    sq_norms = np.einsum("ij,ij->i", index.vectors, index.vectors)
    q_sq = float(q @ q)
    # Rank by the signed squared cosine sign(dot) * dot^2 / (|v|^2 |q|^2). For integer-valued
    # embeddings every product is exact and the quotient is a single rounded division, so
    # equal cosines compare equal, even across different queries, and ties fall through
    # to the chunk id instead of rounding noise. The reported score is its signed square
    # root, which keeps equal cosines bit-identical for the pooled rerank.
    live = (sq_norms > 0) & (q_sq > 0)
    keys = np.where(live, np.sign(dots) * dots * dots / np.where(live, sq_norms * q_sq, 1.0), 0.0)
    scores = np.clip(np.sign(keys) * np.sqrt(np.abs(keys)), -1.0, 1.0)
    order = sorted(range(len(index)), key=lambda i: (-keys[i], index.chunks[i].id))
    return [(index.chunks[i].id, float(scores[i])) for i in order[:k]]


def retrieve(gateway: Gateway, index: VectorIndex, query: str, k: int) -> list[tuple[str, float]]:
    if len(index) == 0:
        raise RetrievalError("index is empty")
    return search(index, gateway.embed(query), k)


def format_contexts(chunks: Sequence[Chunk]) -> str:
    return "\n\n".join(f"[{i}] {c.text}" for i, c in enumerate(chunks, 1))


def generate_answer(
    gateway: Gateway,
    question: MainQuestion,
    context: Sequence[Chunk],
    config: RagConfig,
    *,
    instructions: str = "",
    system_id: str | None = None,
) -> LongFormAnswer:
    if not context:
        raise RetrievalError("answer generation needs at least one context chunk")
    prompt = instructions + render(GENERATE, {
        "target-words": config.target_words,
        "contexts": format_contexts(context),
        "question": question.text,
    })
    text = gateway.chat(prompt)
    return LongFormAnswer(question.id, system_id or config.strategy.value, text)


def _chunks(index: VectorIndex, ranked: Sequence[tuple[str, float]]) -> list[Chunk]:
    by_id = {c.id: c for c in index.chunks}
    return [by_id[cid] for cid, _ in ranked]


def run_baseline(gateway: Gateway, question: MainQuestion, index: VectorIndex, config: RagConfig) -> LongFormAnswer:
    ranked = retrieve(gateway, index, question.text, config.top_k)
    return generate_answer(gateway, question, _chunks(index, ranked), config,
                           system_id=Strategy.BASELINE.value)


def run_m1(gateway: Gateway, question: MainQuestion, index: VectorIndex, config: RagConfig) -> LongFormAnswer:
    ranked = retrieve(gateway, index, question.text, config.top_k)
    return generate_answer(gateway, question, _chunks(index, ranked), config,
                           instructions=M1_INSTRUCTIONS, system_id=Strategy.M1.value)


def _bullets(subqs: Sequence[SubQuestion]) -> str:
    return "\n".join(f"- {sq.text}" for sq in subqs)


def m2_query(question: MainQuestion, decomposition: Decomposition) -> str:
    return " ".join([question.text] + [sq.text for sq in decomposition.core])


def run_m2(
    gateway: Gateway, question: MainQuestion, decomposition: Decomposition, index: VectorIndex, config: RagConfig
) -> LongFormAnswer:
    core = decomposition.core
    if not core:
        logger.info("question %s has no core sub-questions; m2 falls back to the baseline", question.id)
        ranked = retrieve(gateway, index, question.text, config.top_k)
        return generate_answer(gateway, question, _chunks(index, ranked), config, system_id=Strategy.M2.value)
    ranked = retrieve(gateway, index, m2_query(question, decomposition), config.top_k)
    instructions = render(PromptTemplate("m2", M2_INSTRUCTIONS), {"core-sub-questions": _bullets(core)})
    return generate_answer(gateway, question, _chunks(index, ranked), config,
                           instructions=instructions, system_id=Strategy.M2.value)


@dataclass(frozen=True)
class PooledChunk:
    chunk_id: str
    score: float  # best retrieval score over all queries that returned the chunk
    coverage: int = 0  # number of distinct core sub-questions the chunk covers

    @property
    def sort_key(self) -> tuple[int, float, str]:
        return (-self.coverage, -self.score, self.chunk_id)


def pool_retrievals(retrievals: Sequence[Sequence[tuple[str, float]]]) -> dict[str, float]:
    """Union of ranked lists keyed by chunk id, keeping each chunk's best score."""
    pool: dict[str, float] = {}
    for ranked in retrievals:
        for cid, score in ranked:
            if cid not in pool or score > pool[cid]:
                pool[cid] = score
    return pool


def rerank_pool(pool: Sequence[PooledChunk], k: int) -> list[PooledChunk]:
    return sorted(pool, key=lambda p: p.sort_key)[:k]


def m3_context(
    gateway: Gateway, question: MainQuestion, decomposition: Decomposition, index: VectorIndex, config: RagConfig
) -> list[PooledChunk]:
    """Pool per-query retrievals, count covered core sub-questions per chunk, rerank."""
    core = decomposition.core
    queries = [question.text] + [sq.text for sq in core]
    retrievals = gateway.map(lambda q: retrieve(gateway, index, q, config.top_k), queries)
    pool = pool_retrievals(retrievals)
    if not pool:
        raise RetrievalError(f"question {question.id}: empty retrieval pool")
    pairs = [(cid, sq) for cid in pool for sq in core]

    def covered(pair: tuple[str, SubQuestion]) -> bool:
        cid, sq = pair
        j = judge_coverage(gateway, index.chunk(cid).text, sq, target_kind=TargetKind.CHUNK,
                           target_id=cid, max_chars=config.max_judge_chars)
        return j.covered

    verdicts = gateway.map(covered, pairs)
    counts = {cid: 0 for cid in pool}
    for (cid, _), v in zip(pairs, verdicts):
        counts[cid] += int(v)
    pooled = [PooledChunk(cid, score, counts[cid]) for cid, score in pool.items()]
    return rerank_pool(pooled, config.rerank_k)


def run_m3(
    gateway: Gateway, question: MainQuestion, decomposition: Decomposition, index: VectorIndex, config: RagConfig
) -> LongFormAnswer:
    ranked = m3_context(gateway, question, decomposition, index, config)
    context = [index.chunk(p.chunk_id) for p in ranked]
    return generate_answer(gateway, question, context, config, system_id=Strategy.M3.value)


def run_m4(
    gateway: Gateway, question: MainQuestion, decomposition: Decomposition, index: VectorIndex, config: RagConfig
) -> LongFormAnswer:
    core = decomposition.core
    if not core:
        raise StrategyError(f"question {question.id}: m4 needs at least one core sub-question")

    def sub_answer(sq: SubQuestion) -> LongFormAnswer:
        ranked = retrieve(gateway, index, sq.text, config.top_k)
        sub_q = MainQuestion(sq.id, sq.text)
        return generate_answer(gateway, sub_q, _chunks(index, ranked), config, system_id=Strategy.M4.value)

    answers = gateway.map(sub_answer, core)
    blocks = "\n\n".join(f"Sub-question {i}: {sq.text}\nSub-answer {i}: {a.text}"
                         for i, (sq, a) in enumerate(zip(core, answers), 1))
    prompt = render(SYNTHESIZE, {"target-words": config.target_words, "sub-answers": blocks,
                                 "question": question.text})
    return LongFormAnswer(question.id, Strategy.M4.value, gateway.chat(prompt))


def run_strategy(
    gateway: Gateway,
    strategy: Strategy,
    question: MainQuestion,
    index: VectorIndex,
    config: RagConfig,
    decomposition: Decomposition | None = None,
) -> LongFormAnswer:
    if strategy is Strategy.BASELINE:
        return run_baseline(gateway, question, index, config)
    if strategy is Strategy.M1:
        return run_m1(gateway, question, index, config)
    if decomposition is None:
        raise StrategyError(f"{strategy.value} needs the question's decomposition")
    runner = {Strategy.M2: run_m2, Strategy.M3: run_m3, Strategy.M4: run_m4}[strategy]
    return runner(gateway, question, decomposition, index, config)
