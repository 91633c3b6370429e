"""Two-step question decomposition: generate sub-questions, then classify each one."""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass
from typing import Iterable, Sequence

from .domain import MainQuestion, SubQuestion, SubQuestionType, SubqragError, SUBQ_TYPES
from .gateway import Gateway, ParseFailure, extract_json
from .samples import CLASSIFY_FEW_SHOT
from .templates import CLASSIFY, DECOMPOSE, render

logger = logging.getLogger(__name__)

DEFAULT_TARGET_COUNT = 20
DEFAULT_FEW_SHOT = 3


class DecompositionError(SubqragError):
    pass


class ClassificationError(SubqragError):
    pass


_PUNCT = str.maketrans("", "", string.punctuation)


def normalize_question(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


@dataclass(frozen=True)
class Decomposition:
    question_id: str
    subquestions: tuple[SubQuestion, ...]

    def __post_init__(self) -> None:
        if not self.subquestions:
            raise DecompositionError(f"decomposition of {self.question_id} is empty")
        seen = set()
        for sq in self.subquestions:
            if sq.parent_id != self.question_id:
                raise DecompositionError(
                    f"sub-question {sq.id} belongs to {sq.parent_id}, not {self.question_id}")
            key = normalize_question(sq.text)
            if key in seen:
                raise DecompositionError(f"duplicate sub-question text in {self.question_id}: {sq.text!r}")
            seen.add(key)

    def of_type(self, qtype: SubQuestionType) -> list[SubQuestion]:
        return [sq for sq in self.subquestions if sq.qtype is qtype]

    @property
    def core(self) -> list[SubQuestion]:
        return self.of_type(SubQuestionType.CORE)

    def counts(self) -> dict[SubQuestionType, int]:
        return {t: len(self.of_type(t)) for t in SUBQ_TYPES}


def group_decompositions(subquestions: Iterable[SubQuestion]) -> dict[str, Decomposition]:
    """Rebuild per-question decompositions from a flat sub-question list, keeping order."""
    buckets: dict[str, list[SubQuestion]] = {}
    for sq in subquestions:
        buckets.setdefault(sq.parent_id, []).append(sq)
    return {qid: Decomposition(qid, tuple(sqs)) for qid, sqs in buckets.items()}


def dedupe(texts: Iterable[str]) -> list[str]:
    seen = set()
    out = []
    for t in texts:
        t = t.strip()
        key = normalize_question(t)
        if not key or key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out


_LIST_MARKER = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*")


def _parse_subquestions(completion: str) -> list[str]:
    try:
        data = extract_json(completion)
    except ParseFailure:
        data = None
    if isinstance(data, dict):
        data = data.get("sub_questions")
    if isinstance(data, list):
        texts = [x for x in data if isinstance(x, str)]
    else:
        # Fall back to a plain numbered/bulleted list.
        lines = [_LIST_MARKER.sub("", ln) for ln in completion.splitlines()]
        texts = [ln for ln in lines if ln.strip().endswith("?")]
    texts = dedupe(texts)
    if not texts:
        raise ParseFailure("no sub-questions in completion")
    return texts


def generate_subquestions(
    gateway: Gateway, question: MainQuestion, target_count: int = DEFAULT_TARGET_COUNT
) -> list[str]:
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    prompt = render(DECOMPOSE, {"question": question.text, "target-count": target_count})
    texts = gateway.ask(prompt, _parse_subquestions, DecompositionError)
    if abs(len(texts) - target_count) > target_count // 2:
        logger.info("question %s: asked for around %d sub-questions, got %d",
                    question.id, target_count, len(texts))
    return texts


def format_classify_examples(examples: Sequence[tuple[str, str, SubQuestionType]]) -> str:
    blocks = []
    for i, (q, sq, t) in enumerate(examples, 1):
        label = {SubQuestionType.FOLLOW_UP: "follow-up"}.get(t, t.value)
        blocks.append(f"Example {i}:\nComplex question: {q}\nSub-question: {sq}\nType: {label}")
    return "\n\n".join(blocks)


def pick_few_shot(subq_text: str, n: int = DEFAULT_FEW_SHOT) -> list[tuple[str, str, SubQuestionType]]:
    """First ``n`` pool examples, skipping one identical to the sub-question being classified."""
    key = normalize_question(subq_text)
    pool = [ex for ex in CLASSIFY_FEW_SHOT if normalize_question(ex[1]) != key]
    return pool[:n]


def _parse_type(completion: str) -> SubQuestionType:
    try:
        data = extract_json(completion)
        raw = data.get("type") if isinstance(data, dict) else data
    except ParseFailure:
        raw = completion.strip().strip(".").strip()
    if not isinstance(raw, str):
        raise ParseFailure(f"type label missing: {completion[:80]!r}")
    try:
        return SubQuestionType.parse(raw)
    except SubqragError as exc:
        raise ParseFailure(str(exc)) from exc


def classify_subquestion(
    gateway: Gateway,
    question: MainQuestion,
    subq_text: str,
    few_shot: Sequence[tuple[str, str, SubQuestionType]] | None = None,
) -> SubQuestionType:
    if not subq_text.strip():
        raise ClassificationError("sub-question text is empty")
    if few_shot is None:
        few_shot = pick_few_shot(subq_text)
    prompt = render(CLASSIFY, {
        "few-shot-examples": format_classify_examples(few_shot),
        "question": question.text,
        "sub-question": subq_text,
    })
    return gateway.ask(prompt, _parse_type, ClassificationError)


def decompose_question(
    gateway: Gateway,
    question: MainQuestion,
    *,
    target_count: int = DEFAULT_TARGET_COUNT,
    few_shot_count: int = DEFAULT_FEW_SHOT,
) -> Decomposition:
    texts = generate_subquestions(gateway, question, target_count)
    labels = gateway.map(
        lambda t: classify_subquestion(gateway, question, t, pick_few_shot(t, few_shot_count)),
        texts, return_exceptions=True)
    subqs = []
    for text, label in zip(texts, labels):
        if isinstance(label, Exception):
            logger.warning("question %s: dropping sub-question %r: %s", question.id, text, label)
            continue
        subqs.append((text, label))
    if not subqs:
        raise DecompositionError(f"question {question.id}: every sub-question failed classification")
    return Decomposition(question.id, tuple(
        SubQuestion(id=f"{question.id}/sq{k}", parent_id=question.id, text=text, qtype=label)
        for k, (text, label) in enumerate(subqs, 1)))


def decompose_all(gateway: Gateway, questions: Sequence[MainQuestion], **kwargs) -> list[Decomposition]:
    return [decompose_question(gateway, q, **kwargs) for q in questions]
