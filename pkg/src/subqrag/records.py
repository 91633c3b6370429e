"""JSONL readers and writers for the on-disk record schemas."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

from .domain import (
    Chunk,
    CoverageJudgment,
    LongFormAnswer,
    MainQuestion,
    SubQuestion,
    SubqragError,
    ValidationError,
)

T = TypeVar("T")


class IngestionError(SubqragError):
    """An input file is missing, empty, or holds invalid records."""


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise IngestionError(f"{path}:{lineno}: expected a JSON object")
            rows.append(row)
    return rows


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    atomic_write_text(path, "".join(dumps(r) + "\n" for r in rows))


def _load(path: str | Path, parse: Callable[[dict[str, Any]], T], *, allow_empty: bool) -> list[T]:
    rows = read_jsonl(path)
    if not rows and not allow_empty:
        raise IngestionError(f"{path}: file holds no records")
    out = []
    for i, row in enumerate(rows, 1):
        try:
            out.append(parse(row))
        except (KeyError, ValueError, TypeError, ValidationError) as exc:
            raise IngestionError(f"{path}: record {i}: {exc}") from exc
    return out


def _unique(items: list[T], key: Callable[[T], Any], path: str | Path, what: str) -> None:
    seen = set()
    for item in items:
        k = key(item)
        if k in seen:
            raise IngestionError(f"{path}: duplicate {what} {k!r}")
        seen.add(k)


def load_questions(path: str | Path) -> list[MainQuestion]:
    items = _load(path, MainQuestion.from_dict, allow_empty=False)
    _unique(items, lambda q: q.id, path, "question id")
    return items


def load_subquestions(path: str | Path, questions: Iterable[MainQuestion] | None = None) -> list[SubQuestion]:
    items = _load(path, SubQuestion.from_dict, allow_empty=False)
    _unique(items, lambda s: s.id, path, "sub-question id")
    if questions is not None:
        known = {q.id for q in questions}
        for s in items:
            if s.parent_id not in known:
                raise IngestionError(f"{path}: sub-question {s.id} has unknown parent {s.parent_id!r}")
    return items


def load_chunks(path: str | Path) -> list[Chunk]:
    items = _load(path, Chunk.from_dict, allow_empty=True)
    _unique(items, lambda c: (c.question_id, c.id), path, "chunk id")
    return items


def load_answers(path: str | Path) -> list[LongFormAnswer]:
    items = _load(path, LongFormAnswer.from_dict, allow_empty=False)
    _unique(items, lambda a: (a.question_id, a.system_id), path, "(question, system) answer")
    return items


def load_judgments(path: str | Path) -> list[CoverageJudgment]:
    items = _load(path, CoverageJudgment.from_dict, allow_empty=False)
    _unique(items, lambda j: (j.subquestion_id, j.target_kind, j.target_id), path, "judgment")
    return items


def save(path: str | Path, records: Iterable[Any]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))
