"""Scenario tables and the six fine-grained coverage metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Mapping, Sequence

from .coverage import CoverageRun, chunk_cover_fraction
from .decompose import Decomposition
from .domain import (
    LongFormAnswer,
    SubQuestionType,
    SubqragError,
    SUBQ_TYPES,
    addressing_position,
)

logger = logging.getLogger(__name__)

Aggregation = Literal["pooled", "macro"]
CORE, BACKGROUND, FOLLOW_UP = SubQuestionType.CORE, SubQuestionType.BACKGROUND, SubQuestionType.FOLLOW_UP

# Scenario order used everywhere: (answered, retrieved)
SCENARIOS: tuple[tuple[bool, bool], ...] = ((False, False), (False, True), (True, False), (True, True))
SCENARIO_NAMES = ("not_answered_not_retrieved", "not_answered_retrieved",
                  "answered_not_retrieved", "answered_retrieved")


class JoinError(SubqragError):
    pass


class UndefinedMetricError(SubqragError):
    pass


@dataclass(frozen=True)
class ScenarioRow:
    count: int
    p_nn: float  # not answered, not retrieved
    p_nr: float  # not answered, retrieved
    p_an: float  # answered, not retrieved
    p_ar: float  # answered, retrieved

    @property
    def probabilities(self) -> tuple[float, float, float, float]:
        return (self.p_nn, self.p_nr, self.p_an, self.p_ar)

    @property
    def answered(self) -> float:
        return self.p_an + self.p_ar

    @property
    def retrieved(self) -> float:
        return self.p_nr + self.p_ar

    @property
    def not_answered(self) -> float:
        return self.p_nn + self.p_nr


EMPTY_ROW = ScenarioRow(0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ScenarioTable:
    rows: Mapping[SubQuestionType, ScenarioRow]

    def __getitem__(self, qtype: SubQuestionType) -> ScenarioRow:
        return self.rows.get(qtype, EMPTY_ROW)

    @classmethod
    def from_counts(cls, counts: Mapping[SubQuestionType, Sequence[int]]) -> "ScenarioTable":
        rows = {}
        for t in SUBQ_TYPES:
            c = list(counts.get(t, (0, 0, 0, 0)))
            n = sum(c)
            rows[t] = ScenarioRow(n, *(x / n for x in c)) if n else EMPTY_ROW
        return cls(rows)

    @classmethod
    def from_percentages(cls, cells: Mapping[SubQuestionType, Sequence[float]], count: int = 100) -> "ScenarioTable":
        """Build a table from published percentage cells (order nn, nr, an, ar)."""
        return cls({t: ScenarioRow(count, *(x / 100.0 for x in cells[t])) for t in cells})

    def to_dict(self) -> dict[str, Any]:
        return {t.value: {"count": self[t].count,
                          **dict(zip(SCENARIO_NAMES, self[t].probabilities))} for t in SUBQ_TYPES}


@dataclass(frozen=True)
class Observation:
    question_id: str
    subquestion_id: str
    qtype: SubQuestionType
    answered: bool
    retrieved: bool


def observations(runs: Iterable[CoverageRun], decomps: Mapping[str, Decomposition]) -> list[Observation]:
    """(answered, retrieved) per sub-question; sub-questions lacking an answer judgment are skipped."""
    out = []
    for run in runs:
        d = decomps.get(run.question_id)
        if d is None:
            raise JoinError(f"no decomposition for question {run.question_id}")
        known = {sq.id for sq in d.subquestions}
        stray = run.subquestion_ids() - known
        if stray:
            raise JoinError(f"run {run.question_id} judges unknown sub-questions {sorted(stray)[:3]}")
        answers = run.answer_judgments()
        for sq in d.subquestions:
            aj = answers.get(sq.id)
            if aj is None:
                logger.warning("sub-question %s has no answer judgment; excluded", sq.id)
                continue
            retrieved = any(j.covered for j in run.chunk_judgments(sq.id))
            out.append(Observation(run.question_id, sq.id, sq.qtype, aj.covered, retrieved))
    return out


def _as_mapping(decomps: Mapping[str, Decomposition] | Sequence[Decomposition]) -> Mapping[str, Decomposition]:
    if isinstance(decomps, Mapping):
        return decomps
    return {d.question_id: d for d in decomps}


def scenario_table(
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition] | Sequence[Decomposition],
    aggregation: Aggregation = "pooled",
) -> ScenarioTable:
    obs = observations(runs, _as_mapping(decomps))
    if aggregation == "pooled":
        counts = {t: [0, 0, 0, 0] for t in SUBQ_TYPES}
        for o in obs:
            counts[o.qtype][SCENARIOS.index((o.answered, o.retrieved))] += 1
        return ScenarioTable.from_counts(counts)
    if aggregation != "macro":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    rows = {}
    for t in SUBQ_TYPES:
        per_q: dict[str, list[int]] = {}
        for o in obs:
            if o.qtype is t:
                per_q.setdefault(o.question_id, [0, 0, 0, 0])[SCENARIOS.index((o.answered, o.retrieved))] += 1
        if not per_q:
            rows[t] = EMPTY_ROW
            continue
        probs = [0.0] * 4
        for c in per_q.values():
            n = sum(c)
            for i in range(4):
                probs[i] += c[i] / n
        rows[t] = ScenarioRow(sum(sum(c) for c in per_q.values()), *(p / len(per_q) for p in probs))
    return ScenarioTable(rows)


def metric_1_2(table: ScenarioTable, qtype: SubQuestionType) -> tuple[float, float]:
    """(answer coverage rate, retrieval coverage rate) for one sub-question type."""
    row = table[qtype]
    if row.count == 0:
        raise UndefinedMetricError(f"no {qtype.value} sub-questions")
    return row.answered, row.retrieved


def metric_3(table: ScenarioTable) -> float:
    row = table[CORE]
    if row.count == 0 or row.retrieved == 0:
        raise UndefinedMetricError("no core sub-question is covered by retrieval")
    return row.p_ar / row.retrieved


def metric_4(table: ScenarioTable) -> float:
    row = table[CORE]
    if row.count == 0 or row.not_answered == 0:
        raise UndefinedMetricError("every core sub-question is answered")
    return row.p_nn / row.not_answered


def _mean(groups: Mapping[str, list[float]], aggregation: Aggregation) -> float | None:
    groups = {k: v for k, v in groups.items() if v}
    if not groups:
        return None
    if aggregation == "macro":
        return math.fsum(math.fsum(v) / len(v) for v in groups.values()) / len(groups)
    values = [x for v in groups.values() for x in v]
    return math.fsum(values) / len(values)


def metric_5(
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition] | Sequence[Decomposition],
    aggregation: Aggregation = "pooled",
) -> float:
    """Mean retrieved-chunk coverage of answered core sub-questions minus that of unanswered ones."""
    decomps = _as_mapping(decomps)
    covered: dict[str, list[float]] = {}
    uncovered: dict[str, list[float]] = {}
    by_run = {r.question_id: r for r in runs}
    for o in observations(runs, decomps):
        if o.qtype is not CORE:
            continue
        frac = chunk_cover_fraction(by_run[o.question_id], o.subquestion_id)
        (covered if o.answered else uncovered).setdefault(o.question_id, []).append(frac)
    p_cov, p_not = _mean(covered, aggregation), _mean(uncovered, aggregation)
    if p_cov is None or p_not is None:
        side = "answered" if p_cov is None else "unanswered"
        raise UndefinedMetricError(f"no {side} core sub-questions")
    return p_cov - p_not


def addressing_positions(
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition] | Sequence[Decomposition],
    answers: Mapping[str, LongFormAnswer],
) -> dict[SubQuestionType, dict[str, list[float]]]:
    """Per type, per question: addressing positions of answered sub-questions."""
    decomps = _as_mapping(decomps)
    out: dict[SubQuestionType, dict[str, list[float]]] = {t: {} for t in SUBQ_TYPES}
    for run in runs:
        d = decomps.get(run.question_id)
        if d is None:
            raise JoinError(f"no decomposition for question {run.question_id}")
        answer = answers.get(run.question_id)
        if answer is None:
            raise JoinError(f"no answer text for question {run.question_id}")
        aj = run.answer_judgments()
        for sq in d.subquestions:
            j = aj.get(sq.id)
            if j is not None and j.covered and j.fragment is not None:
                out[sq.qtype].setdefault(run.question_id, []).append(addressing_position(answer, j.fragment))
    return out


def metric_6(
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition] | Sequence[Decomposition],
    answers: Mapping[str, LongFormAnswer],
    aggregation: Aggregation = "pooled",
) -> float:
    """Mean follow-up position minus the average of the core and background mean positions."""
    positions = addressing_positions(runs, decomps, answers)
    means = {t: _mean(positions[t], aggregation) for t in SUBQ_TYPES}
    missing = [t.value for t, m in means.items() if m is None]
    if missing:
        raise UndefinedMetricError(f"no answered sub-questions of type {', '.join(missing)}")
    return means[FOLLOW_UP] - (means[CORE] + means[BACKGROUND]) / 2


@dataclass
class MetricReport:
    system_id: str
    metric1: dict[SubQuestionType, float | None] = field(default_factory=dict)
    metric2: dict[SubQuestionType, float | None] = field(default_factory=dict)
    metric3: float | None = None
    metric4: float | None = None
    metric5: float | None = None
    metric6: float | None = None
    reasons: dict[str, str] = field(default_factory=dict)
    populations: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric1": {t.value: self.metric1.get(t) for t in SUBQ_TYPES},
            "metric2": {t.value: self.metric2.get(t) for t in SUBQ_TYPES},
            "metric3": self.metric3,
            "metric4": self.metric4,
            "metric5": self.metric5,
            "metric6": self.metric6,
            "reasons": dict(sorted(self.reasons.items())),
            "populations": dict(sorted(self.populations.items())),
        }


def _attempt(report: MetricReport, key: str, fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError as exc:
        report.reasons[key] = str(exc)
        return None


def build_report(
    system_id: str,
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition] | Sequence[Decomposition],
    answers: Mapping[str, LongFormAnswer] | None = None,
    aggregation: Aggregation = "pooled",
) -> tuple[ScenarioTable, MetricReport]:
    """Scenario table plus all six metrics for one system; undefined metrics carry a reason."""
    decomps = _as_mapping(decomps)
    table = scenario_table(runs, decomps, aggregation)
    report = MetricReport(system_id)
    for t in SUBQ_TYPES:
        pair = _attempt(report, f"metric1.{t.value}", metric_1_2, table, t)
        if pair is None:
            report.reasons[f"metric2.{t.value}"] = report.reasons[f"metric1.{t.value}"]
        report.metric1[t], report.metric2[t] = pair if pair else (None, None)
        report.populations[t.value] = table[t].count
    report.metric3 = _attempt(report, "metric3", metric_3, table)
    report.metric4 = _attempt(report, "metric4", metric_4, table)
    report.metric5 = _attempt(report, "metric5", metric_5, runs, decomps, aggregation)
    if answers is None:
        report.reasons["metric6"] = "answer texts not supplied; addressing positions need word counts"
    else:
        report.metric6 = _attempt(report, "metric6", metric_6, runs, decomps, answers, aggregation)
    return table, report
