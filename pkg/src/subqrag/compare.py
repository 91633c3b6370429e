"""Pairwise answer judging with order-swap debiasing, and win-rate matrices."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from .domain import LongFormAnswer, MainQuestion, SubqragError
from .gateway import Gateway, ParseFailure, extract_json
from .templates import JUDGE_PAIR, render

logger = logging.getLogger(__name__)


class PairJudgmentError(SubqragError):
    pass


class IncompleteMatrixError(SubqragError):
    pass


class Outcome(enum.Enum):
    A_WINS = "a_wins"
    B_WINS = "b_wins"
    SPLIT = "split"


def _parse_winner(completion: str) -> str:
    try:
        data = extract_json(completion)
        raw = data.get("winner") if isinstance(data, dict) else data
    except ParseFailure:
        raw = completion
    if isinstance(raw, str):
        w = raw.strip().strip(".\"'").upper()
        w = w.removeprefix("RESPONSE ").strip()
        if w in ("A", "B"):
            return w
    raise ParseFailure(f"no A/B winner in {completion[:80]!r}")


def judge_prompt(question: str, first: str, second: str) -> str:
    return render(JUDGE_PAIR, {"question": question, "response-a": first, "response-b": second})


def judge_pair(gateway: Gateway, question: str, answer_a: str, answer_b: str) -> str:
    """"A" or "B" as presented; the judge is never offered a tie."""
    if not answer_a.strip() or not answer_b.strip():
        raise PairJudgmentError("both answers must be non-empty")
    return gateway.ask(judge_prompt(question, answer_a, answer_b), _parse_winner, PairJudgmentError)


@dataclass(frozen=True)
class PairVerdict:
    question_id: str
    method_a: str
    method_b: str
    first_pass: str  # winner with a shown first
    second_pass: str  # winner after un-swapping, so "A" still means method_a

    @property
    def outcome(self) -> Outcome:
        if self.first_pass == self.second_pass:
            return Outcome.A_WINS if self.first_pass == "A" else Outcome.B_WINS
        return Outcome.SPLIT

    def mirrored(self) -> "PairVerdict":
        flip = {"A": "B", "B": "A"}
        return PairVerdict(self.question_id, self.method_b, self.method_a,
                           flip[self.second_pass], flip[self.first_pass])

    def to_dict(self) -> dict[str, Any]:
        return {"question_id": self.question_id, "method_a": self.method_a, "method_b": self.method_b,
                "first_pass": self.first_pass, "second_pass": self.second_pass,
                "outcome": self.outcome.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PairVerdict":
        return cls(str(d["question_id"]), d["method_a"], d["method_b"], d["first_pass"], d["second_pass"])


PairJudge = Callable[[str, str, str], str]


def judge_pair_debiased(
    judge: PairJudge | Gateway,
    question: MainQuestion,
    answer_a: LongFormAnswer,
    answer_b: LongFormAnswer,
) -> PairVerdict:
    """Judge twice, the second time with the answers swapped."""
    if isinstance(judge, Gateway):
        gw = judge
        judge = lambda q, a, b: judge_pair(gw, q, a, b)  # noqa: E731
    first = judge(question.text, answer_a.text, answer_b.text)
    swapped = judge(question.text, answer_b.text, answer_a.text)
    second = {"A": "B", "B": "A"}[swapped]
    return PairVerdict(question.id, answer_a.system_id, answer_b.system_id, first, second)


@dataclass(frozen=True)
class WinRateMatrix:
    methods: tuple[str, ...]
    cells: tuple[tuple[float | None, ...], ...]  # percent; diagonal None

    def __getitem__(self, key: tuple[str, str]) -> float | None:
        i, j = self.methods.index(key[0]), self.methods.index(key[1])
        return self.cells[i][j]

    def to_dict(self) -> dict[str, Any]:
        return {"methods": list(self.methods),
                "win_rates": {m: {n: self.cells[i][j] for j, n in enumerate(self.methods)}
                              for i, m in enumerate(self.methods)}}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "WinRateMatrix":
        methods = tuple(d["methods"])
        rates = d["win_rates"]
        return cls(methods, tuple(tuple(rates[m][n] for n in methods) for m in methods))


def win_rate_matrix(verdicts: Sequence[PairVerdict], methods: Sequence[str]) -> WinRateMatrix:
    """cells[i][j] = 100 * (wins of i over j + splits / 2) / comparisons of the pair."""
    methods = tuple(methods)
    credit: dict[tuple[str, str], float] = {}
    total: dict[frozenset[str], int] = {}
    questions: dict[frozenset[str], set[str]] = {}
    all_questions = set()
    for v in verdicts:
        if v.method_a not in methods or v.method_b not in methods:
            continue
        key = frozenset((v.method_a, v.method_b))
        total[key] = total.get(key, 0) + 1
        questions.setdefault(key, set()).add(v.question_id)
        all_questions.add(v.question_id)
        if v.outcome is Outcome.SPLIT:
            gains = {v.method_a: 0.5, v.method_b: 0.5}
        else:
            winner = v.method_a if v.outcome is Outcome.A_WINS else v.method_b
            gains = {winner: 1.0}
        for m, g in gains.items():
            other = v.method_b if m == v.method_a else v.method_a
            credit[(m, other)] = credit.get((m, other), 0.0) + g
    gaps = []
    for a, b in itertools.combinations(methods, 2):
        missing = all_questions - questions.get(frozenset((a, b)), set())
        if missing:
            gaps.append(f"{a} vs {b}: {len(missing)} question(s) e.g. {sorted(missing)[0]}")
    if gaps:
        raise IncompleteMatrixError("missing comparisons: " + "; ".join(gaps))
    cells = []
    for a in methods:
        row: list[float | None] = []
        for b in methods:
            if a == b:
                row.append(None)
            else:
                row.append(100.0 * credit.get((a, b), 0.0) / total[frozenset((a, b))])
        cells.append(tuple(row))
    return WinRateMatrix(methods, tuple(cells))


def compare_methods(
    judge: PairJudge | Gateway,
    questions: Sequence[MainQuestion],
    answers: Mapping[str, Mapping[str, LongFormAnswer]],
    methods: Sequence[str],
) -> list[PairVerdict]:
    """Debiased verdicts for every unordered method pair on every question.

    ``answers`` maps method -> question id -> answer.
    """
    missing = [f"{m}:{q.id}" for m in methods for q in questions if q.id not in answers.get(m, {})]
    if missing:
        raise IncompleteMatrixError(f"missing answers for {', '.join(missing)}")
    jobs = [(q, a, b) for q in questions for a, b in itertools.combinations(methods, 2)]
    run = lambda job: judge_pair_debiased(judge, job[0], answers[job[1]][job[0].id],  # noqa: E731
                                          answers[job[2]][job[0].id])
    if isinstance(judge, Gateway):
        return judge.map(run, jobs)
    return [run(job) for job in jobs]
