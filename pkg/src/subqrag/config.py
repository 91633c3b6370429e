"""Run configuration: a flat ``key = value`` file with dotted keys.

Example::

    # subqrag.conf
    provider.kind = mock
    provider.mock_script = fixtures/mock.jsonl
    rag.top_k = 10
    metrics.aggregation = pooled
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .domain import SubqragError


class ConfigError(SubqragError):
    pass


def _positive(v: int) -> int:
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _choice(*options: str) -> Callable[[str], str]:
    def check(v: str) -> str:
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return check


def _optional(check: Callable[[Any], Any]) -> Callable[[Any], Any]:
    return lambda v: None if v is None else check(v)


# key -> (type, default, validator)
SCHEMA: dict[str, tuple[type, Any, Callable[[Any], Any] | None]] = {
    "provider.kind": (str, "mock", _choice("mock", "live")),
    "provider.base_url": (str, "https://api.openai.com/v1", None),
    "provider.chat_model": (str, "gpt-4", None),
    "provider.embed_model": (str, "text-embedding-ada-002", None),
    "provider.max_in_flight": (int, 8, _positive),
    "provider.retry_limit": (int, 3, _positive),
    "provider.backoff_base": (float, 0.5, None),
    "provider.mock_script": (str, None, None),
    "provider.mock_dimension": (int, 64, _positive),
    "cache.dir": (str, ".subqrag-cache", None),
    "decompose.target_count": (int, 20, _positive),
    "decompose.few_shot": (int, 3, _positive),
    "judge.max_judge_chars": (int, 8000, _positive),
    "rag.top_k": (int, 10, _positive),
    "rag.target_words": (int, 300, _positive),
    "rag.rerank_top_k": (int, None, _optional(_positive)),
    "rag.chunk_words": (int, 512, _positive),
    "rag.chunk_overlap": (int, 64, None),
    "quality.validation_size": (int, 100, _positive),
    "quality.seed": (int, 0, None),
    "metrics.aggregation": (str, "pooled", _choice("pooled", "macro")),
    "compare.judge": (str, "llm", _choice("llm", "coverage-rating")),
}


def _coerce(key: str, raw: Any) -> Any:
    typ, _, check = SCHEMA[key]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
        value = None
    elif typ is int:
        if isinstance(raw, bool):
            raise ConfigError(f"{key}: expected an integer")
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    elif typ is float:
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    else:
        value = str(raw).strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
    if value is None and SCHEMA[key][1] is not None:
        raise ConfigError(f"{key}: a value is required")
    if check is not None:
        try:
            value = check(value) if value is not None else value
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return value


@dataclass(frozen=True)
class Config:
    values: Mapping[str, Any] = field(default_factory=lambda: {k: v[1] for k, v in SCHEMA.items()})

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        merged = dict(self.values)
        for key, raw in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, raw)
        return Config(merged)

    def snapshot(self) -> dict[str, Any]:
        return dict(sorted(self.values.items()))

    def digest_payload(self) -> str:
        # cache.dir and the mock script path do not change results
        skip = {"cache.dir", "provider.max_in_flight"}
        return json.dumps({k: v for k, v in self.snapshot().items() if k not in skip}, sort_keys=True)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> Config:
    cfg = Config()
    if path is not None:
        path = Path(path)
        raw = parse_config_text(path.read_text(encoding="utf-8"), str(path))
        cfg = cfg.with_overrides(raw)
        script = cfg["provider.mock_script"]
        if script and not Path(script).is_absolute():
            cfg = cfg.with_overrides({"provider.mock_script": str(path.parent / script)})
    if overrides:
        cfg = cfg.with_overrides({k: v for k, v in overrides.items() if v is not None})
    return cfg
