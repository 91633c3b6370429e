"""Sub-question coverage evaluation and coverage-guided retrieval-augmented generation."""

from __future__ import annotations

from .domain import (
    Chunk,
    CoverageJudgment,
    LongFormAnswer,
    MainQuestion,
    SubqragError,
    SubQuestion,
    SubQuestionType,
    TextFragment,
)

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "CoverageJudgment",
    "LongFormAnswer",
    "MainQuestion",
    "SubQuestion",
    "SubQuestionType",
    "SubqragError",
    "TextFragment",
    "__version__",
]
