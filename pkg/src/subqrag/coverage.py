"""Sub-question coverage judgments over answers and retrieved chunks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .decompose import Decomposition
from .domain import (
    Chunk,
    CoverageJudgment,
    LongFormAnswer,
    MainQuestion,
    SubQuestion,
    SubqragError,
    TargetKind,
    TextFragment,
    normalize_ws,
    words_of,
)
from .gateway import Gateway, ParseFailure, extract_json
from .samples import COVERAGE_FEW_SHOT
from .templates import COVERAGE, render

logger = logging.getLogger(__name__)

DEFAULT_MAX_JUDGE_CHARS = 8000


class JudgmentError(SubqragError):
    pass


class CoverageLookupError(SubqragError, LookupError):
    pass


def locate_quote(text: str, quote: str) -> TextFragment | None:
    """Word span of the first case-insensitive, whitespace-normalized occurrence of ``quote``."""
    needle = normalize_ws(quote).strip("\"'“”‘’").strip().lower()
    if not needle:
        return None
    words = words_of(text)
    hay = " ".join(words).lower()
    pos = hay.find(needle)
    if pos < 0:
        return None
    # Lowercasing can change string length for a few scripts; only trust 1:1 mappings.
    if len(hay) != len(" ".join(words)):
        return None
    start_word = hay.count(" ", 0, pos)
    end_word = hay.count(" ", 0, pos + len(needle) - 1) + 1
    return TextFragment(start_word, end_word, " ".join(words[start_word:end_word]))


def format_coverage_examples() -> str:
    blocks = []
    for i, (text, question, quote) in enumerate(COVERAGE_FEW_SHOT, 1):
        verdict = f'"{quote}"' if quote else "None"
        blocks.append(f"Example {i}:\nText: {text}\nQ: {question}\nJudgment: {verdict}")
    return "\n\n".join(blocks)


def _parse_verdict(completion: str) -> str | None:
    stripped = completion.strip().strip(".").strip()
    if stripped.strip("\"'").lower() == "none":
        return None
    try:
        data = extract_json(completion)
    except ParseFailure:
        raise ParseFailure(f"not a coverage verdict: {completion[:80]!r}") from None
    if not isinstance(data, dict) or not isinstance(data.get("covered"), bool):
        raise ParseFailure("coverage verdict lacks a boolean 'covered'")
    if not data["covered"]:
        return None
    quote = data.get("quote")
    if not isinstance(quote, str) or not quote.strip() or quote.strip().lower() == "none":
        return None
    return quote


def judge_coverage(
    gateway: Gateway,
    text: str,
    subq: SubQuestion,
    *,
    target_kind: TargetKind = TargetKind.ANSWER,
    target_id: str = "",
    max_chars: int = DEFAULT_MAX_JUDGE_CHARS,
) -> CoverageJudgment:
    if not text.strip():
        raise JudgmentError("cannot judge coverage of empty text")
    shown = text
    if len(shown) > max_chars:
        logger.warning("%s %s: truncating %d chars to %d for judging",
                       target_kind.value, target_id, len(text), max_chars)
        shown = shown[:max_chars]
    prompt = render(COVERAGE, {
        "few-shot-examples": format_coverage_examples(),
        "text": shown,
        "sub-question": subq.text,
    })
    quote = gateway.ask(prompt, _parse_verdict, JudgmentError)
    fragment = locate_quote(text, quote) if quote is not None else None
    if quote is not None and fragment is None:
        logger.warning("%s %s / %s: judge quote not found in text; recording as not covered",
                       target_kind.value, target_id, subq.id)
    return CoverageJudgment(subq.id, target_kind, target_id, fragment is not None, fragment)


@dataclass(frozen=True)
class PairFailure:
    subquestion_id: str
    target_kind: TargetKind
    target_id: str
    error: str


@dataclass(frozen=True)
class CoverageRun:
    question_id: str
    judgments: tuple[CoverageJudgment, ...]
    failures: tuple[PairFailure, ...] = field(default=())

    def systems(self) -> list[str]:
        return list(dict.fromkeys(j.target_id for j in self.judgments if j.target_kind is TargetKind.ANSWER))

    def for_system(self, system_id: str) -> "CoverageRun":
        """This run restricted to one system's answer (chunk judgments are kept)."""
        keep = tuple(j for j in self.judgments
                     if j.target_kind is TargetKind.CHUNK or j.target_id == system_id)
        return CoverageRun(self.question_id, keep, self.failures)

    def answer_judgments(self) -> dict[str, CoverageJudgment]:
        systems = self.systems()
        if len(systems) > 1:
            raise CoverageLookupError(
                f"run for {self.question_id} mixes answers of {systems}; select one with for_system()")
        return {j.subquestion_id: j for j in self.judgments if j.target_kind is TargetKind.ANSWER}

    def chunk_judgments(self, subq_id: str) -> list[CoverageJudgment]:
        return [j for j in self.judgments
                if j.target_kind is TargetKind.CHUNK and j.subquestion_id == subq_id]

    def chunk_ids(self) -> list[str]:
        return list(dict.fromkeys(j.target_id for j in self.judgments if j.target_kind is TargetKind.CHUNK))

    def subquestion_ids(self) -> set[str]:
        return {j.subquestion_id for j in self.judgments}


def judge_question(
    gateway: Gateway,
    question: MainQuestion,
    answer: LongFormAnswer,
    chunks: Sequence[Chunk],
    decomposition: Decomposition,
    *,
    max_chars: int = DEFAULT_MAX_JUDGE_CHARS,
) -> CoverageRun:
    if decomposition.question_id != question.id or answer.question_id != question.id:
        raise JudgmentError(f"inputs do not all belong to question {question.id}")
    targets: list[tuple[TargetKind, str, str]] = [(TargetKind.ANSWER, answer.system_id, answer.text)]
    targets += [(TargetKind.CHUNK, c.id, c.text) for c in chunks]
    pairs = [(sq, t) for sq in decomposition.subquestions for t in targets]

    def one(pair: tuple[SubQuestion, tuple[TargetKind, str, str]]) -> CoverageJudgment:
        sq, (kind, tid, text) = pair
        return judge_coverage(gateway, text, sq, target_kind=kind, target_id=tid, max_chars=max_chars)

    results = gateway.map(one, pairs, return_exceptions=True)
    judgments, failures = [], []
    for (sq, (kind, tid, _)), res in zip(pairs, results):
        if isinstance(res, Exception):
            logger.warning("judging %s against %s %s failed: %s", sq.id, kind.value, tid, res)
            failures.append(PairFailure(sq.id, kind, tid, str(res)))
        else:
            judgments.append(res)
    if not judgments:
        raise JudgmentError(f"question {question.id}: every coverage judgment failed")
    return CoverageRun(question.id, tuple(judgments), tuple(failures))


def chunk_cover_fraction(run: CoverageRun, subq_id: str) -> float:
    if subq_id not in run.subquestion_ids():
        raise CoverageLookupError(f"no judgments for sub-question {subq_id}")
    js = run.chunk_judgments(subq_id)
    if not js:
        return 0.0
    return sum(j.covered for j in js) / len(js)


def group_runs(judgments: Sequence[CoverageJudgment], decomps: dict[str, Decomposition]) -> dict[str, CoverageRun]:
    """Split a flat judgment list into per-question runs using sub-question parentage."""
    parent = {sq.id: d.question_id for d in decomps.values() for sq in d.subquestions}
    buckets: dict[str, list[CoverageJudgment]] = {}
    for j in judgments:
        try:
            qid = parent[j.subquestion_id]
        except KeyError:
            raise CoverageLookupError(f"judgment references unknown sub-question {j.subquestion_id}") from None
        buckets.setdefault(qid, []).append(j)
    return {qid: CoverageRun(qid, tuple(js)) for qid, js in buckets.items()}
