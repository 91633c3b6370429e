"""Coverage-vector answer rating and weight search against human preference pairs."""

from __future__ import annotations

import enum
import logging
import math
import random
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .decompose import Decomposition
from .domain import (
    CoverageJudgment,
    LongFormAnswer,
    SubQuestionType,
    SubqragError,
    SUBQ_TYPES,
    TargetKind,
)
from .gateway import ConfigurationError

logger = logging.getLogger(__name__)


class IncompleteInputError(SubqragError):
    pass


class Preference(enum.Enum):
    A = "A"
    B = "B"
    TIE = "tie"

    def mirrored(self) -> "Preference":
        return {Preference.A: Preference.B, Preference.B: Preference.A}.get(self, self)


@dataclass(frozen=True)
class CoverageVector:
    core: float | None
    background: float | None
    follow_up: float | None

    def __post_init__(self) -> None:
        for v in (self.core, self.background, self.follow_up):
            if v is not None and not (0.0 <= v <= 1.0):
                raise ValueError(f"coverage fraction {v} outside [0, 1]")

    def get(self, qtype: SubQuestionType) -> float | None:
        return {SubQuestionType.CORE: self.core, SubQuestionType.BACKGROUND: self.background,
                SubQuestionType.FOLLOW_UP: self.follow_up}[qtype]

    def to_dict(self) -> dict[str, float | None]:
        return {"core": self.core, "background": self.background, "follow_up": self.follow_up}


@dataclass(frozen=True)
class RatingWeights:
    core: float
    background: float
    follow_up: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(w) for w in self.as_tuple()):
            raise ValueError("rating weights must be finite")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.core, self.background, self.follow_up)

    def scaled(self, factor: float) -> "RatingWeights":
        return RatingWeights(self.core * factor, self.background * factor, self.follow_up * factor)

    @classmethod
    def parse(cls, text: str) -> "RatingWeights":
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights need three comma-separated numbers: core,background,follow_up")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.core:g},{self.background:g},{self.follow_up:g}"


HYBRID_WEIGHTS = RatingWeights(1.0, 0.5, -1.0)
CORE_ONLY = RatingWeights(1.0, 0.0, 0.0)


def coverage_vector(
    answer: LongFormAnswer, decomposition: Decomposition, judgments: Iterable[CoverageJudgment]
) -> CoverageVector:
    """Per-type fraction of sub-questions whose judgment against ``answer`` is covered."""
    verdicts = {j.subquestion_id: j.covered for j in judgments
                if j.target_kind is TargetKind.ANSWER and j.target_id == answer.system_id}
    missing = [sq.id for sq in decomposition.subquestions if sq.id not in verdicts]
    if missing:
        raise IncompleteInputError(
            f"answer {answer.system_id} lacks judgments for {len(missing)} sub-questions, e.g. {missing[0]}")
    fractions = {}
    for t in SUBQ_TYPES:
        sqs = decomposition.of_type(t)
        fractions[t] = sum(verdicts[sq.id] for sq in sqs) / len(sqs) if sqs else None
    return CoverageVector(fractions[SubQuestionType.CORE], fractions[SubQuestionType.BACKGROUND],
                          fractions[SubQuestionType.FOLLOW_UP])


def rating(weights: RatingWeights, v: CoverageVector) -> float:
    total = 0.0
    for w, c, name in zip(weights.as_tuple(), (v.core, v.background, v.follow_up), SUBQ_TYPES):
        if c is None:
            logger.debug("coverage for %s undefined; counted as 0", name.value)
            continue
        total += w * c
    if not math.isfinite(total):
        raise ValueError("non-finite rating")
    return total


def predict_preference(weights: RatingWeights, v_a: CoverageVector, v_b: CoverageVector) -> Preference:
    ra, rb = rating(weights, v_a), rating(weights, v_b)
    if ra > rb:
        return Preference.A
    if rb > ra:
        return Preference.B
    return Preference.TIE


@dataclass(frozen=True)
class PreferencePair:
    pair_id: str
    question_id: str
    answer_a: LongFormAnswer
    answer_b: LongFormAnswer
    label: Preference
    question: str = ""

    def __post_init__(self) -> None:
        if self.label is Preference.TIE:
            raise ValueError(f"pair {self.pair_id}: tied labels are excluded at ingestion")

    def to_dict(self) -> dict[str, Any]:
        return {"pair_id": self.pair_id, "question_id": self.question_id, "question": self.question,
                "answer_a": self.answer_a.text, "answer_b": self.answer_b.text,
                "label": self.label.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PreferencePair":
        pid, qid = str(d["pair_id"]), str(d["question_id"])
        return cls(pid, qid,
                   LongFormAnswer(qid, f"{pid}/a", d["answer_a"]),
                   LongFormAnswer(qid, f"{pid}/b", d["answer_b"]),
                   Preference(d["label"]), d.get("question", ""))


VectorPairs = Mapping[str, tuple[CoverageVector, CoverageVector]]


def accuracy(weights: RatingWeights, pairs: Sequence[PreferencePair], vectors: VectorPairs) -> float:
    """Share of pairs whose predicted preference matches the label; predicted ties earn half credit."""
    if not pairs:
        raise IncompleteInputError("accuracy is undefined on an empty pair set")
    credit = 0.0
    for p in pairs:
        try:
            v_a, v_b = vectors[p.pair_id]
        except KeyError:
            raise IncompleteInputError(f"no coverage vectors for pair {p.pair_id}") from None
        pred = predict_preference(weights, v_a, v_b)
        credit += 0.5 if pred is Preference.TIE else float(pred is p.label)
    return credit / len(pairs)


def default_grid(step: float = 0.25, low: float = -1.0, high: float = 1.0) -> list[RatingWeights]:
    """w_core fixed at 1; background and follow-up weights swept over ``[low, high]``."""
    n = int(round((high - low) / step))
    values = [low + i * step for i in range(n + 1)]
    return [RatingWeights(1.0, b, f) for b in values for f in values]


def grid_search(
    grid: Sequence[RatingWeights], validation: Sequence[PreferencePair], vectors: VectorPairs
) -> tuple[RatingWeights, float]:
    """Best grid point by validation accuracy; the earliest point wins ties."""
    if not grid:
        raise ConfigurationError("grid search needs at least one grid point")
    if not validation:
        raise IncompleteInputError("grid search needs a non-empty validation set")
    best, best_acc = grid[0], accuracy(grid[0], validation, vectors)
    for w in grid[1:]:
        acc = accuracy(w, validation, vectors)
        if acc > best_acc:
            best, best_acc = w, acc
    return best, best_acc


def split_holdout(
    pairs: Sequence[PreferencePair], validation_size: int, seed: int
) -> tuple[list[PreferencePair], list[PreferencePair]]:
    """Seeded random (validation, test) split."""
    if not 0 < validation_size <= len(pairs):
        raise ValueError(f"validation_size must be in 1..{len(pairs)}")
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    chosen = set(order[:validation_size])
    validation = [p for i, p in enumerate(pairs) if i in chosen]
    test = [p for i, p in enumerate(pairs) if i not in chosen]
    return validation, test


def pair_vectors(
    pairs: Sequence[PreferencePair],
    decomps: Mapping[str, Decomposition],
    judgments: Sequence[CoverageJudgment],
) -> dict[str, tuple[CoverageVector, CoverageVector]]:
    out = {}
    for p in pairs:
        d = decomps.get(p.question_id)
        if d is None:
            raise IncompleteInputError(f"no decomposition for question {p.question_id}")
        out[p.pair_id] = (coverage_vector(p.answer_a, d, judgments), coverage_vector(p.answer_b, d, judgments))
    return out


_WH_PREFIXES = ("why", "how")


def ingest_webgpt(rows: Iterable[Mapping[str, Any]]) -> list[PreferencePair]:
    """WebGPT-comparisons rows to preference pairs.

    Keeps questions whose first word is "why" or "how", drops zero-score ties,
    and labels by the sign of ``score_0`` (positive means answer_0 preferred).
    """
    pairs = []
    for i, row in enumerate(rows):
        q = row.get("question") or {}
        text = q.get("full_text", "") if isinstance(q, Mapping) else str(q)
        first = text.strip().split(" ", 1)[0].lower().strip("\"'") if text.strip() else ""
        if first not in _WH_PREFIXES:
            continue
        score = float(row.get("score_0", 0.0))
        if score == 0:
            continue
        a, b = (row.get("answer_0") or "").strip(), (row.get("answer_1") or "").strip()
        if not a or not b:
            continue
        qid = str(q.get("id") if isinstance(q, Mapping) and q.get("id") else f"q{i}")
        pid = f"p{i}"
        pairs.append(PreferencePair(pid, qid, LongFormAnswer(qid, f"{pid}/a", a),
                                    LongFormAnswer(qid, f"{pid}/b", b),
                                    Preference.A if score > 0 else Preference.B, text.strip()))
    return pairs
