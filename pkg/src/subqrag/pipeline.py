"""End-to-end evaluate / improve pipelines with run manifests."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from . import records
from .compare import PairJudge, compare_methods, win_rate_matrix
from .config import Config
from .coverage import CoverageRun, judge_coverage, judge_question
from .decompose import Decomposition, decompose_all, group_decompositions
from .domain import Chunk, LongFormAnswer, MainQuestion, SubqragError, TargetKind
from .gateway import Gateway, HttpProvider, MockProvider, ResponseCache
from .metrics import build_report
from .quality import HYBRID_WEIGHTS, CoverageVector, RatingWeights, rating
from .rag import RagConfig, Strategy, build_index, run_strategy, window_chunks
from .report import render_report, render_winrates

logger = logging.getLogger(__name__)

ALL_METHODS = tuple(s.value for s in Strategy)


class PipelineError(SubqragError):
    pass


def build_gateway(config: Config) -> Gateway:
    if config["provider.kind"] == "mock":
        script = config["provider.mock_script"]
        if not script:
            raise PipelineError("mock provider needs provider.mock_script (or --mock-script)")
        provider = MockProvider.from_jsonl(script, dimension=config["provider.mock_dimension"])
    else:
        provider = HttpProvider(config["provider.base_url"], chat_model=config["provider.chat_model"],
                                embed_model=config["provider.embed_model"])
    cache_dir = config["cache.dir"]
    return Gateway(
        provider,
        ResponseCache(cache_dir) if cache_dir else ResponseCache(),
        model=config["provider.chat_model"],
        embed_model=config["provider.embed_model"],
        retry_limit=config["provider.retry_limit"],
        max_in_flight=config["provider.max_in_flight"],
        backoff_base=config["provider.backoff_base"],
    )


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@dataclass
class RunManifest:
    kind: str
    config: dict[str, Any]
    inputs: dict[str, str]
    run_id: str = ""
    started: str = field(default_factory=_now)
    finished: str | None = None
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.run_id:
            payload = json.dumps({"kind": self.kind, "config": self.config, "inputs": self.inputs},
                                 sort_keys=True)
            self.run_id = hashlib.sha256(payload.encode()).hexdigest()[:16]

    def output_digest(self) -> str:
        """Digest over every stage output; equal across replays of the same run."""
        parts = sorted((name, out["sha256"]) for st in self.stages.values()
                       for name, out in st.get("outputs", {}).items())
        return hashlib.sha256(json.dumps(parts).encode()).hexdigest()

    def to_dict(self) -> dict[str, Any]:
        return {"run_id": self.run_id, "kind": self.kind, "config": self.config, "inputs": self.inputs,
                "started": self.started, "finished": self.finished, "stages": self.stages,
                "output_digest": self.output_digest()}

    def save(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        records.atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


@contextmanager
def _stage(manifest: RunManifest, name: str, out_dir: Path) -> Iterator[dict[str, Any]]:
    entry: dict[str, Any] = {"status": "running", "started": _now(), "outputs": {}}
    manifest.stages[name] = entry
    try:
        yield entry
    except Exception as exc:
        entry.update(status="error", error=f"{type(exc).__name__}: {exc}", finished=_now())
        manifest.finished = _now()
        manifest.save(out_dir)
        raise
    for fname in list(entry["outputs"]):
        entry["outputs"][fname] = {"sha256": file_digest(out_dir / fname)}
    entry.update(status="ok", finished=_now())


def _by_question(items, key=lambda x: x.question_id) -> dict[str, list]:
    out: dict[str, list] = {}
    for it in items:
        out.setdefault(key(it), []).append(it)
    return out


def judge_all(
    gateway: Gateway,
    questions: Sequence[MainQuestion],
    answers: Sequence[LongFormAnswer],
    chunks: Sequence[Chunk],
    decomps: Mapping[str, Decomposition],
    max_chars: int,
) -> list[CoverageRun]:
    """One run per question holding every system's answer judgments; chunks are judged once."""
    ans_by_q, chunks_by_q = _by_question(answers), _by_question(chunks)
    runs = []
    for q in questions:
        q_answers = ans_by_q.get(q.id, [])
        if not q_answers:
            logger.warning("question %s has no answers; skipped", q.id)
            continue
        judgments, failures = [], []
        for i, ans in enumerate(q_answers):
            run = judge_question(gateway, q, ans, chunks_by_q.get(q.id, []) if i == 0 else [],
                                 decomps[q.id], max_chars=max_chars)
            judgments += run.judgments
            failures += run.failures
        runs.append(CoverageRun(q.id, tuple(judgments), tuple(failures)))
    return runs


def evaluate_judgments(
    runs: Sequence[CoverageRun],
    decomps: Mapping[str, Decomposition],
    answers: Sequence[LongFormAnswer] | None,
    aggregation: str = "pooled",
) -> dict[str, Any]:
    """report.json document: scenario table and metrics per answering system."""
    systems = list(dict.fromkeys(s for r in runs for s in r.systems()))
    out: dict[str, Any] = {"aggregation": aggregation, "systems": {}}
    for sid in systems:
        sys_runs = [r.for_system(sid) for r in runs if sid in r.systems()]
        sys_answers = None
        if answers is not None:
            sys_answers = {a.question_id: a for a in answers if a.system_id == sid}
        table, report = build_report(sid, sys_runs, decomps, sys_answers, aggregation)  # type: ignore[arg-type]
        out["systems"][sid] = {"scenarios": table.to_dict(), "metrics": report.to_dict()}
    return out


def _write_json(path: Path, doc: Any) -> None:
    records.atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


@dataclass
class PipelineResult:
    out_dir: Path
    manifest: RunManifest
    document: dict[str, Any]

    @property
    def output_digest(self) -> str:
        return self.manifest.output_digest()


def pipeline_evaluate(
    questions_path: str | Path,
    answers_path: str | Path,
    chunks_path: str | Path,
    config: Config,
    out_dir: str | Path,
    gateway: Gateway | None = None,
) -> PipelineResult:
    """decompose -> judge -> metrics; writes subquestions, judgments, report.json/.txt, manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {str(p): file_digest(p) for p in (questions_path, answers_path, chunks_path) if Path(p).exists()}
    manifest = RunManifest("evaluate", config.snapshot(), inputs)
    gateway = gateway or build_gateway(config)

    with _stage(manifest, "ingest", out):
        questions = records.load_questions(questions_path)
        answers = records.load_answers(answers_path)
        chunks = records.load_chunks(chunks_path)
    with _stage(manifest, "decompose", out) as st:
        decomps = {d.question_id: d for d in decompose_all(
            gateway, questions, target_count=config["decompose.target_count"],
            few_shot_count=config["decompose.few_shot"])}
        records.save(out / "subquestions.jsonl", [sq for d in decomps.values() for sq in d.subquestions])
        st["outputs"]["subquestions.jsonl"] = None
    with _stage(manifest, "judge", out) as st:
        runs = judge_all(gateway, questions, answers, chunks, decomps, config["judge.max_judge_chars"])
        records.save(out / "judgments.jsonl", [j for r in runs for j in r.judgments])
        st["failures"] = [f.__dict__ | {"target_kind": f.target_kind.value} for r in runs for f in r.failures]
        st["outputs"]["judgments.jsonl"] = None
    with _stage(manifest, "metrics", out) as st:
        doc = evaluate_judgments(runs, decomps, answers, config["metrics.aggregation"])
        _write_json(out / "report.json", doc)
        records.atomic_write_text(out / "report.txt", render_report(doc))
        st["outputs"]["report.json"] = None
        st["outputs"]["report.txt"] = None
    manifest.stages["gateway"] = {"provider_calls": gateway.stats.provider_calls,
                                  "cache_hits": gateway.stats.cache_hits}
    manifest.finished = _now()
    manifest.save(out)
    return PipelineResult(out, manifest, doc)


def coverage_rating_judge(
    gateway: Gateway,
    decomps_by_text: Mapping[str, Decomposition],
    weights: RatingWeights = HYBRID_WEIGHTS,
    max_chars: int = 8000,
) -> PairJudge:
    """Pair judge that prefers the answer with the higher coverage rating; ties go to the first shown."""

    def vector(question: str, text: str) -> CoverageVector:
        d = decomps_by_text[question]
        covered = {sq.id: judge_coverage(gateway, text, sq, target_kind=TargetKind.ANSWER,
                                         max_chars=max_chars).covered for sq in d.subquestions}
        fr = {}
        for t in ("core", "background", "follow_up"):
            sqs = [sq for sq in d.subquestions if sq.qtype.value == t]
            fr[t] = sum(covered[sq.id] for sq in sqs) / len(sqs) if sqs else None
        return CoverageVector(fr["core"], fr["background"], fr["follow_up"])

    def judge(question: str, a: str, b: str) -> str:
        return "B" if rating(weights, vector(question, b)) > rating(weights, vector(question, a)) else "A"

    return judge


def pipeline_improve(
    questions_path: str | Path,
    chunks_path: str | Path,
    config: Config,
    out_dir: str | Path,
    methods: Sequence[str] = ALL_METHODS,
    gateway: Gateway | None = None,
    subquestions_path: str | Path | None = None,
) -> PipelineResult:
    """decompose -> index -> run strategies -> pairwise compare; writes answers/, verdicts, winrates."""
    methods = [Strategy(m).value for m in methods]
    if len(methods) < 2:
        raise PipelineError("comparison needs at least two methods")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [p for p in (questions_path, chunks_path, subquestions_path) if p is not None]
    manifest = RunManifest("improve", config.snapshot() | {"methods": list(methods)},
                           {str(p): file_digest(p) for p in paths if Path(p).exists()})
    gateway = gateway or build_gateway(config)
    rag_config = RagConfig(top_k=config["rag.top_k"], target_words=config["rag.target_words"],
                           rerank_top_k=config["rag.rerank_top_k"],
                           max_judge_chars=config["judge.max_judge_chars"])

    with _stage(manifest, "ingest", out):
        questions = records.load_questions(questions_path)
        chunks = window_chunks(records.load_chunks(chunks_path), config["rag.chunk_words"],
                               config["rag.chunk_overlap"])
    with _stage(manifest, "decompose", out) as st:
        if subquestions_path is not None:
            decomps = group_decompositions(records.load_subquestions(subquestions_path, questions))
        else:
            decomps = {d.question_id: d for d in decompose_all(
                gateway, questions, target_count=config["decompose.target_count"],
                few_shot_count=config["decompose.few_shot"])}
        records.save(out / "subquestions.jsonl", [sq for d in decomps.values() for sq in d.subquestions])
        st["outputs"]["subquestions.jsonl"] = None
    chunks_by_q = _by_question(chunks)
    with _stage(manifest, "index", out):
        indexes = {q.id: build_index(gateway, chunks_by_q.get(q.id, [])) for q in questions}
    answers: dict[str, dict[str, LongFormAnswer]] = {}
    with _stage(manifest, "generate", out) as st:
        for m in methods:
            strategy = Strategy(m)
            answers[m] = {q.id: run_strategy(gateway, strategy, q, indexes[q.id], rag_config, decomps.get(q.id))
                          for q in questions}
            name = f"answers/{m}.jsonl"
            records.save(out / name, answers[m].values())
            st["outputs"][name] = None
    with _stage(manifest, "compare", out) as st:
        if config["compare.judge"] == "llm":
            judge: PairJudge | Gateway = gateway
        else:
            judge = coverage_rating_judge(gateway, {q.text: decomps[q.id] for q in questions},
                                          max_chars=config["judge.max_judge_chars"])
        verdicts = compare_methods(judge, questions, answers, methods)
        records.save(out / "verdicts.jsonl", verdicts)
        matrix = win_rate_matrix(verdicts, methods)
        doc = matrix.to_dict()
        _write_json(out / "winrates.json", doc)
        records.atomic_write_text(out / "winrates.txt", render_winrates(doc))
        st["outputs"].update({"verdicts.jsonl": None, "winrates.json": None, "winrates.txt": None})
    manifest.stages["gateway"] = {"provider_calls": gateway.stats.provider_calls,
                                  "cache_hits": gateway.stats.cache_hits}
    manifest.finished = _now()
    manifest.save(out)
    return PipelineResult(out, manifest, doc)
