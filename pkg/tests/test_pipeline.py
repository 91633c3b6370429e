from __future__ import annotations

import itertools
import json

import pytest

from subqrag.config import load_config
from subqrag.pipeline import pipeline_evaluate, pipeline_improve
from subqrag.records import IngestionError


def config_for(fixture_dir, cache_dir, **extra):
    return load_config(None, {"provider.kind": "mock", "provider.mock_script": str(fixture_dir / "mock.jsonl"),
                              "cache.dir": str(cache_dir), **extra})


def run_evaluate(fixture_dir, out, cache):
    return pipeline_evaluate(fixture_dir / "questions.jsonl", fixture_dir / "answers.jsonl",
                             fixture_dir / "chunks.jsonl", config_for(fixture_dir, cache), out)


@pytest.fixture(scope="module")
def evaluated(tmp_path_factory):
    from conftest import FIXTURE_DIR
    base = tmp_path_factory.mktemp("eval")
    return run_evaluate(FIXTURE_DIR, base / "out", base / "cache")


def _expected(fixture_dir):
    return json.loads((fixture_dir / "expected.json").read_text(encoding="utf-8"))


def test_fixture_decomposition_counts(evaluated, fixture_dir):
    rows = [json.loads(l) for l in (evaluated.out_dir / "subquestions.jsonl").read_text().splitlines()]
    for qid, counts in _expected(fixture_dir)["decomposition_counts"].items():
        for qtype, n in counts.items():
            assert sum(r["parent_id"] == qid and r["qtype"] == qtype for r in rows) == n


def test_fixture_report_matches_design(evaluated, fixture_dir):
    doc = evaluated.document
    names = ["not_answered_not_retrieved", "not_answered_retrieved", "answered_not_retrieved", "answered_retrieved"]
    for sid, exp in _expected(fixture_dir)["systems"].items():
        body = doc["systems"][sid]
        for qtype, counts in exp["scenario_counts"].items():
            n = sum(counts)
            assert body["scenarios"][qtype]["count"] == n
            for name, c in zip(names, counts):
                assert body["scenarios"][qtype][name] == pytest.approx(c / n, abs=1e-12)
        m = body["metrics"]
        for key in ("metric1", "metric2", "metric3", "metric4", "metric5", "metric6"):
            assert key not in m["reasons"], m["reasons"]
        core = exp["scenario_counts"]["core"]
        assert m["metric3"] == pytest.approx(core[3] / (core[1] + core[3]), abs=1e-12)
        assert m["metric4"] == pytest.approx(core[0] / (core[0] + core[1]), abs=1e-12)
        fr = exp["core_chunk_fractions"]
        assert m["metric5"] == pytest.approx(
            sum(fr["answered"]) / len(fr["answered"]) - sum(fr["unanswered"]) / len(fr["unanswered"]), abs=1e-12)
        pos = {t: sum(v) / len(v) for t, v in exp["positions"].items()}
        assert m["metric6"] == pytest.approx(pos["follow_up"] - (pos["core"] + pos["background"]) / 2, abs=1e-9)


def test_fixture_hand_counts(evaluated):
    # engine-a answers three core sub-questions per question: 9 of 36 cores
    a = evaluated.document["systems"]["engine-a"]["metrics"]
    assert a["metric1"]["core"] == 0.25
    # engine-b's quote for one core drifts and is downgraded, leaving 2 of 36
    b = evaluated.document["systems"]["engine-b"]["metrics"]
    assert b["metric1"]["core"] == pytest.approx(2 / 36)
    assert evaluated.document["systems"]["engine-a"]["scenarios"]["core"]["count"] == 36


def test_report_text_written(evaluated):
    text = (evaluated.out_dir / "report.txt").read_text(encoding="utf-8")
    assert "Metric #6" in text and "engine-a" in text
    manifest = json.loads((evaluated.out_dir / "manifest.json").read_text())
    assert all(st["status"] == "ok" for name, st in manifest["stages"].items() if "status" in st)
    assert manifest["output_digest"] == evaluated.output_digest


def test_evaluate_replay_identical(fixture_dir, tmp_path):
    first = run_evaluate(fixture_dir, tmp_path / "a", tmp_path / "cache")
    second = run_evaluate(fixture_dir, tmp_path / "b", tmp_path / "cache")
    assert first.output_digest == second.output_digest
    assert second.manifest.stages["gateway"]["provider_calls"] == 0
    for name in ("subquestions.jsonl", "judgments.jsonl", "report.json", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_questions_file(fixture_dir, tmp_path):
    empty = tmp_path / "q.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(IngestionError):
        pipeline_evaluate(empty, fixture_dir / "answers.jsonl", fixture_dir / "chunks.jsonl",
                          config_for(fixture_dir, tmp_path / "cache"), tmp_path / "out")
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["stages"]["ingest"]["status"] == "error"


def test_improve_full_matrix(fixture_dir, tmp_path):
    res = pipeline_improve(fixture_dir / "questions.jsonl", fixture_dir / "chunks.jsonl",
                           config_for(fixture_dir, tmp_path / "cache"), tmp_path / "out")
    methods = ["baseline", "m1", "m2", "m3", "m4"]
    assert sorted(p.name for p in (tmp_path / "out" / "answers").iterdir()) == [f"{m}.jsonl" for m in methods]
    rates = res.document["win_rates"]
    assert res.document["methods"] == methods
    for a, b in itertools.permutations(methods, 2):
        assert abs(rates[a][b] + rates[b][a] - 100) <= 1e-9
    for m in methods:
        assert rates[m][m] is None
    expected = _expected(fixture_dir)
    rank = expected["judge_rank"]
    unscripted = {frozenset(p) for p in expected["unscripted_pairs"]}
    for a, b in itertools.permutations(methods, 2):
        if frozenset((a, b)) in unscripted:
            assert rates[a][b] == 50.0
        else:
            assert rates[a][b] == (100.0 if rank[a] > rank[b] else 0.0)


def test_improve_method_subset(fixture_dir, tmp_path):
    res = pipeline_improve(fixture_dir / "questions.jsonl", fixture_dir / "chunks.jsonl",
                           config_for(fixture_dir, tmp_path / "cache"), tmp_path / "out", ["baseline", "m3"])
    assert res.document["methods"] == ["baseline", "m3"]
    assert res.document["win_rates"]["m3"]["baseline"] == 100.0


def test_improve_replay_identical(fixture_dir, tmp_path):
    run = lambda out: pipeline_improve(fixture_dir / "questions.jsonl", fixture_dir / "chunks.jsonl",  # noqa: E731
                                       config_for(fixture_dir, tmp_path / "cache"), tmp_path / out)
    first, second = run("a"), run("b")
    assert first.output_digest == second.output_digest
    assert second.manifest.stages["gateway"]["provider_calls"] == 0


def test_coverage_rating_judge(fixture_dir, tmp_path):
    cfg = config_for(fixture_dir, tmp_path / "cache", **{"compare.judge": "coverage-rating"})
    res = pipeline_improve(fixture_dir / "questions.jsonl", fixture_dir / "chunks.jsonl", cfg, tmp_path / "out",
                           ["baseline", "m3"])
    rates = res.document["win_rates"]
    assert rates["m3"]["baseline"] + rates["baseline"]["m3"] == pytest.approx(100)
