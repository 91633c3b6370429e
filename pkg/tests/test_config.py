from __future__ import annotations

import pytest

from subqrag.config import SCHEMA, Config, ConfigError, load_config, parse_config_text


def test_defaults():
    cfg = Config()
    assert cfg["rag.top_k"] == 10
    assert cfg["rag.target_words"] == 300
    assert cfg["decompose.target_count"] == 20
    assert cfg["quality.validation_size"] == 100
    assert cfg["metrics.aggregation"] == "pooled"
    assert cfg["rag.rerank_top_k"] is None
    assert cfg["judge.max_judge_chars"] == 8000


def test_load_file_with_comments(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text("# comment\nrag.top_k = 5  # inline\nprovider.mock_script = mock.jsonl\n"
                 "metrics.aggregation = macro\nrag.rerank_top_k = none\n", encoding="utf-8")
    cfg = load_config(p)
    assert cfg["rag.top_k"] == 5
    assert cfg["metrics.aggregation"] == "macro"
    assert cfg["provider.mock_script"] == str(tmp_path / "mock.jsonl")
    assert cfg["rag.rerank_top_k"] is None


@pytest.mark.parametrize("text", [
    "rag.topk = 5", "rag.top_k = five", "rag.top_k = 0", "metrics.aggregation = median",
    "rag.top_k = 5\nrag.top_k = 6", "no equals sign", "provider.kind = remote"])
def test_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        Config().with_overrides(parse_config_text(text))


def test_overrides_win(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("rag.top_k = 5\n", encoding="utf-8")
    assert load_config(p, {"rag.top_k": 3})["rag.top_k"] == 3


def test_unknown_override_rejected():
    with pytest.raises(ConfigError):
        Config().with_overrides({"rag.depth": 1})


def test_snapshot_covers_schema():
    assert set(Config().snapshot()) == set(SCHEMA)
