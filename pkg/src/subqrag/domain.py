"""Shared value types for questions, sub-questions, chunks, answers and judgments."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)


class SubqragError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SubqragError):
    """A record violates one of its invariants."""


class InvalidFragmentError(ValidationError):
    pass


_WS = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def words_of(text: str) -> list[str]:
    """Whitespace tokens of the normalized text."""
    norm = normalize_ws(text)
    return norm.split(" ") if norm else []


class SubQuestionType(enum.Enum):
    CORE = "core"
    BACKGROUND = "background"
    FOLLOW_UP = "follow_up"

    @classmethod
    def parse(cls, raw: str) -> "SubQuestionType":
        key = re.sub(r"[\s\-]+", "_", str(raw).strip().lower())
        key = key.removesuffix("_sub_question").removesuffix("_sub_questions")
        aliases = {"core": cls.CORE, "background": cls.BACKGROUND,
                   "follow_up": cls.FOLLOW_UP, "followup": cls.FOLLOW_UP}
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown sub-question type: {raw!r}") from None

    def __str__(self) -> str:
        return self.value


SUBQ_TYPES: tuple[SubQuestionType, ...] = tuple(SubQuestionType)


def _require_text(value: str, what: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise ValidationError(f"{what} must be a non-empty string")


@dataclass(frozen=True)
class MainQuestion:
    id: str
    text: str

    def __post_init__(self) -> None:
        _require_text(self.id, "question id")
        _require_text(self.text, f"question {self.id} text")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MainQuestion":
        return cls(id=str(d["id"]), text=d["text"])


@dataclass(frozen=True)
class SubQuestion:
    id: str
    parent_id: str
    text: str
    qtype: SubQuestionType

    def __post_init__(self) -> None:
        _require_text(self.id, "sub-question id")
        _require_text(self.text, f"sub-question {self.id} text")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "parent_id": self.parent_id, "text": self.text,
                "qtype": self.qtype.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SubQuestion":
        return cls(id=str(d["id"]), parent_id=str(d["parent_id"]), text=d["text"],
                   qtype=SubQuestionType.parse(d["qtype"]))


@dataclass(frozen=True)
class Chunk:
    id: str
    question_id: str
    text: str
    source: str | None = None

    def __post_init__(self) -> None:
        _require_text(self.id, "chunk id")
        _require_text(self.text, f"chunk {self.id} text")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "question_id": self.question_id, "source": self.source,
                "text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Chunk":
        return cls(id=str(d["id"]), question_id=str(d["question_id"]), text=d["text"],
                   source=d.get("source"))


@dataclass(frozen=True)
class LongFormAnswer:
    question_id: str
    system_id: str
    text: str
    word_count: int = field(init=False)

    def __post_init__(self) -> None:
        _require_text(self.text, f"answer of {self.system_id} to {self.question_id}")
        object.__setattr__(self, "word_count", len(words_of(self.text)))

    @property
    def words(self) -> list[str]:
        return words_of(self.text)

    def to_dict(self) -> dict[str, Any]:
        return {"question_id": self.question_id, "system_id": self.system_id, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LongFormAnswer":
        return cls(question_id=str(d["question_id"]), system_id=str(d["system_id"]), text=d["text"])


@dataclass(frozen=True)
class TextFragment:
    """A half-open word span ``[start_word, end_word)`` of a host text."""

    start_word: int
    end_word: int
    quote: str

    def __post_init__(self) -> None:
        if not (0 <= self.start_word < self.end_word):
            raise InvalidFragmentError(
                f"fragment span [{self.start_word}, {self.end_word}) is empty or negative")

    def check_against(self, host_text: str) -> None:
        words = words_of(host_text)
        if self.end_word > len(words):
            raise InvalidFragmentError(
                f"fragment end {self.end_word} exceeds host length {len(words)}")
        if normalize_ws(self.quote) != " ".join(words[self.start_word:self.end_word]):
            raise InvalidFragmentError("fragment quote does not match the host words")

    def to_dict(self) -> dict[str, Any]:
        return {"start_word": self.start_word, "end_word": self.end_word, "quote": self.quote}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TextFragment":
        return cls(start_word=int(d["start_word"]), end_word=int(d["end_word"]), quote=d["quote"])


class TargetKind(enum.Enum):
    ANSWER = "answer"
    CHUNK = "chunk"


@dataclass(frozen=True)
class CoverageJudgment:
    subquestion_id: str
    target_kind: TargetKind
    target_id: str
    covered: bool
    fragment: TextFragment | None = None

    def __post_init__(self) -> None:
        if self.covered != (self.fragment is not None):
            raise ValidationError(
                f"judgment {self.subquestion_id}/{self.target_id}: covered={self.covered} "
                f"but fragment is {'absent' if self.fragment is None else 'present'}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "subquestion_id": self.subquestion_id,
            "target_kind": self.target_kind.value,
            "target_id": self.target_id,
            "covered": self.covered,
            "fragment": self.fragment.to_dict() if self.fragment else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CoverageJudgment":
        frag = d.get("fragment")
        covered = d["covered"]
        if not isinstance(covered, bool):
            raise ValidationError(f"'covered' must be a boolean, got {covered!r}")
        return cls(
            subquestion_id=str(d["subquestion_id"]),
            target_kind=TargetKind(d["target_kind"]),
            target_id=str(d["target_id"]),
            covered=covered,
            fragment=TextFragment.from_dict(frag) if frag is not None else None,
        )


def addressing_position(answer: LongFormAnswer, fragment: TextFragment) -> float:
    """Where in the answer (percent of its words) the fragment starts."""
    fragment.check_against(answer.text)
    return 100.0 * fragment.start_word / answer.word_count
