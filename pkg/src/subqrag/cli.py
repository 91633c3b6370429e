"""``subqrag`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import records
from .compare import compare_methods, win_rate_matrix
from .config import Config, load_config
from .coverage import CoverageRun, group_runs
from .decompose import decompose_all, group_decompositions
from .domain import MainQuestion, SubqragError
from .pipeline import (
    ALL_METHODS,
    build_gateway,
    coverage_rating_judge,
    evaluate_judgments,
    judge_all,
    pipeline_evaluate,
    pipeline_improve,
)
from .quality import (
    HYBRID_WEIGHTS,
    PreferencePair,
    RatingWeights,
    accuracy,
    default_grid,
    grid_search,
    ingest_webgpt,
    pair_vectors,
    predict_preference,
    rating,
    split_holdout,
)
from .rag import RagConfig, Strategy, build_index, run_strategy, window_chunks
from .report import render_any

logger = logging.getLogger("subqrag")


def _config(args: argparse.Namespace) -> Config:
    overrides: dict[str, Any] = {}
    if args.cache_dir:
        overrides["cache.dir"] = args.cache_dir
    if args.mock_script:
        overrides["provider.kind"] = "mock"
        overrides["provider.mock_script"] = args.mock_script
    if args.seed is not None:
        overrides["quality.seed"] = args.seed
    for key, attr in (("decompose.target_count", "target_count"), ("rag.top_k", "top_k"),
                      ("rag.target_words", "target_words"), ("quality.validation_size", "validation_size"),
                      ("metrics.aggregation", "aggregation"), ("compare.judge", "judge")):
        if getattr(args, attr, None) is not None:
            overrides[key] = getattr(args, attr)
    return load_config(args.config, overrides)


def _questions_for(ids: Sequence[str], path: str | None) -> dict[str, MainQuestion]:
    if path:
        return {q.id: q for q in records.load_questions(path)}
    # Coverage judging never shows the main question, so ids stand in for text.
    return {qid: MainQuestion(qid, qid) for qid in ids}


def _write_json(path: str, doc: Any) -> None:
    records.atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def cmd_decompose(args: argparse.Namespace) -> int:
    cfg = _config(args)
    gw = build_gateway(cfg)
    questions = records.load_questions(args.questions)
    decomps = decompose_all(gw, questions, target_count=cfg["decompose.target_count"],
                            few_shot_count=cfg["decompose.few_shot"])
    records.save(args.out, [sq for d in decomps for sq in d.subquestions])
    for d in decomps:
        counts = {t.value: n for t, n in d.counts().items()}
        print(f"{d.question_id}: {len(d.subquestions)} sub-questions {counts}")
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    cfg = _config(args)
    gw = build_gateway(cfg)
    decomps = group_decompositions(records.load_subquestions(args.subquestions))
    answers = records.load_answers(args.answers)
    chunks = records.load_chunks(args.chunks)
    qmap = _questions_for(list(decomps), args.questions)
    runs = judge_all(gw, [qmap[qid] for qid in decomps], answers, chunks, decomps, cfg["judge.max_judge_chars"])
    records.save(args.out, [j for r in runs for j in r.judgments])
    failures = sum(len(r.failures) for r in runs)
    print(f"wrote {sum(len(r.judgments) for r in runs)} judgments ({failures} failed pairs) to {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    decomps = group_decompositions(records.load_subquestions(args.subquestions))
    answers = records.load_answers(args.answers) if args.answers else None
    merged: dict[str, Any] = {"aggregation": cfg["metrics.aggregation"], "systems": {}}
    for path in args.judgments:
        runs: list[CoverageRun] = list(group_runs(records.load_judgments(path), decomps).values())
        doc = evaluate_judgments(runs, decomps, answers, cfg["metrics.aggregation"])
        for sid, body in doc["systems"].items():
            if sid in merged["systems"]:
                raise SubqragError(f"system {sid!r} appears in more than one judgments file")
            merged["systems"][sid] = body
    _write_json(args.out, merged)
    print(render_any(merged), end="")
    return 0


def _load_pairs(args: argparse.Namespace):
    pairs = [PreferencePair.from_dict(r) for r in records.read_jsonl(args.pairs)]
    decomps = group_decompositions(records.load_subquestions(args.subquestions))
    judgments = records.load_judgments(args.judgments)
    return pairs, pair_vectors(pairs, decomps, judgments)


def cmd_rate(args: argparse.Namespace) -> int:
    weights = RatingWeights.parse(args.weights)
    pairs, vectors = _load_pairs(args)
    rows = []
    for p in pairs:
        va, vb = vectors[p.pair_id]
        rows.append({"pair_id": p.pair_id, "rating_a": rating(weights, va), "rating_b": rating(weights, vb),
                     "predicted": predict_preference(weights, va, vb).value, "label": p.label.value,
                     "coverage_a": va.to_dict(), "coverage_b": vb.to_dict()})
    acc = accuracy(weights, pairs, vectors)
    if args.out:
        records.write_jsonl(args.out, rows)
    print(f"weights {weights}: accuracy {acc:.4f} on {len(pairs)} pairs")
    return 0


def cmd_grid_search(args: argparse.Namespace) -> int:
    cfg = _config(args)
    pairs, vectors = _load_pairs(args)
    validation, test = split_holdout(pairs, cfg["quality.validation_size"], cfg["quality.seed"])
    best, val_acc = grid_search(default_grid(args.step), validation, vectors)
    doc = {"best_weights": {"core": best.core, "background": best.background, "follow_up": best.follow_up},
           "validation_accuracy": val_acc, "validation_size": len(validation),
           "test_accuracy": accuracy(best, test, vectors) if test else None, "test_size": len(test),
           "seed": cfg["quality.seed"]}
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_ingest_preferences(args: argparse.Namespace) -> int:
    if args.format != "webgpt":
        raise SubqragError(f"unsupported preference format {args.format!r}")
    pairs = ingest_webgpt(records.read_jsonl(args.input))
    records.save(args.out, pairs)
    if args.questions_out:
        qs = {p.question_id: p.question for p in pairs}
        records.save(args.questions_out, [MainQuestion(qid, text) for qid, text in qs.items()])
    if args.answers_out:
        records.save(args.answers_out, [a for p in pairs for a in (p.answer_a, p.answer_b)])
    print(f"kept {len(pairs)} preference pairs")
    return 0


def cmd_rag_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    gw = build_gateway(cfg)
    strategy = Strategy(args.strategy)
    questions = records.load_questions(args.questions)
    decomps = group_decompositions(records.load_subquestions(args.subquestions, questions)) \
        if args.subquestions else {}
    chunks = window_chunks(records.load_chunks(args.chunks), cfg["rag.chunk_words"], cfg["rag.chunk_overlap"])
    rc = RagConfig(top_k=cfg["rag.top_k"], target_words=cfg["rag.target_words"],
                   rerank_top_k=cfg["rag.rerank_top_k"], strategy=strategy,
                   max_judge_chars=cfg["judge.max_judge_chars"])
    answers = []
    for q in questions:
        index = build_index(gw, [c for c in chunks if c.question_id == q.id])
        answers.append(run_strategy(gw, strategy, q, index, rc, decomps.get(q.id)))
    records.save(args.out, answers)
    print(f"wrote {len(answers)} {strategy.value} answers to {args.out}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _config(args)
    gw = build_gateway(cfg)
    methods = [Strategy(m).value for m in args.methods.split(",")]
    questions = records.load_questions(args.questions)
    answers = {}
    for m in methods:
        loaded = records.load_answers(Path(args.answers_dir) / f"{m}.jsonl")
        answers[m] = {a.question_id: a for a in loaded}
    if cfg["compare.judge"] == "llm":
        judge: Any = gw
    else:
        if not args.subquestions:
            raise SubqragError("--judge coverage-rating needs --subquestions")
        decomps = group_decompositions(records.load_subquestions(args.subquestions, questions))
        judge = coverage_rating_judge(gw, {q.text: decomps[q.id] for q in questions}, HYBRID_WEIGHTS,
                                      cfg["judge.max_judge_chars"])
    verdicts = compare_methods(judge, questions, answers, methods)
    matrix = win_rate_matrix(verdicts, methods).to_dict()
    if args.verdicts_out:
        records.save(args.verdicts_out, verdicts)
    _write_json(args.out, matrix)
    print(render_any(matrix), end="")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
    text = render_any(doc)
    if args.out:
        records.atomic_write_text(args.out, text)
    print(text, end="")
    return 0


def cmd_evaluate_pipeline(args: argparse.Namespace) -> int:
    res = pipeline_evaluate(args.questions, args.answers, args.chunks, _config(args), args.out_dir)
    print(render_any(res.document), end="")
    print(f"run {res.manifest.run_id} output digest {res.output_digest}")
    return 0


def cmd_improve_pipeline(args: argparse.Namespace) -> int:
    methods = args.methods.split(",")
    res = pipeline_improve(args.questions, args.chunks, _config(args), args.out_dir, methods,
                           subquestions_path=args.subquestions)
    print(render_any(res.document), end="")
    print(f"run {res.manifest.run_id} output digest {res.output_digest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # Subcommands repeat the global flags with SUPPRESS so they don't reset values given earlier.
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", help="flat key = value config file", **kw)
        g.add_argument("--cache-dir", help="response cache directory (overrides cache.dir)", **kw)
        g.add_argument("--mock-script", help="JSONL mock provider script; implies provider.kind=mock", **kw)
        g.add_argument("--seed", type=int, help="seed for hold-out splits", **kw)
        g.add_argument("-v", "--verbose", action="store_true", **kw)
        return g

    common = global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="subqrag", parents=[global_flags(suppress=False)],
                                     description="Sub-question coverage evaluation for RAG systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=fn)
        return p

    p = add("decompose", cmd_decompose, "generate and classify sub-questions")
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-count", type=int)

    p = add("judge", cmd_judge, "judge sub-question coverage of answers and chunks")
    p.add_argument("--subquestions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--questions")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "scenario tables and metrics from judgments")
    p.add_argument("--judgments", required=True, action="append",
                   help="judgments file; repeat once per retrieval set / engine")
    p.add_argument("--subquestions", required=True)
    p.add_argument("--answers", help="answer texts; required for Metric #6")
    p.add_argument("--aggregation", choices=("pooled", "macro"))
    p.add_argument("--out", required=True)

    for name, fn, helptext in (("rate", cmd_rate, "rate preference pairs with fixed weights"),
                               ("grid-search", cmd_grid_search, "search rating weights on a hold-out split")):
        p = add(name, fn, helptext)
        p.add_argument("--pairs", required=True)
        p.add_argument("--subquestions", required=True)
        p.add_argument("--judgments", required=True)
        p.add_argument("--out")
        if name == "rate":
            p.add_argument("--weights", default=str(HYBRID_WEIGHTS))
        else:
            p.add_argument("--validation-size", type=int)
            p.add_argument("--step", type=float, default=0.25)

    p = add("ingest-preferences", cmd_ingest_preferences, "convert a preference dataset to pairs")
    p.add_argument("--format", default="webgpt")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--questions-out")
    p.add_argument("--answers-out")

    p = add("rag-run", cmd_rag_run, "answer questions with one RAG strategy")
    p.add_argument("--strategy", required=True, choices=ALL_METHODS)
    p.add_argument("--questions", required=True)
    p.add_argument("--subquestions")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int)
    p.add_argument("--target-words", type=int)

    p = add("compare", cmd_compare, "pairwise judge strategies into a win-rate matrix")
    p.add_argument("--answers-dir", required=True, help="directory holding <method>.jsonl answer files")
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--questions", required=True)
    p.add_argument("--subquestions")
    p.add_argument("--judge", choices=("llm", "coverage-rating"))
    p.add_argument("--verdicts-out")
    p.add_argument("--out", required=True)

    p = add("report", cmd_report, "render report.json or winrates.json as text tables")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")

    p = add("evaluate-pipeline", cmd_evaluate_pipeline, "decompose, judge and evaluate in one run")
    p.add_argument("--questions", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--aggregation", choices=("pooled", "macro"))
    p.add_argument("--out-dir", required=True)

    p = add("improve-pipeline", cmd_improve_pipeline, "run all strategies and compare them")
    p.add_argument("--questions", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--subquestions")
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--judge", choices=("llm", "coverage-rating"))
    p.add_argument("--out-dir", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SubqragError, ValueError, OSError) as exc:
        print(f"subqrag: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
