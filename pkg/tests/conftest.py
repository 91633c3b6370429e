from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

import subqrag
from subqrag.gateway import Gateway, MockProvider, MockRule

FIXTURE_DIR = Path(subqrag.__file__).parent / "data" / "fixture"


def rule(match: Any, response: Any) -> MockRule:
    return MockRule(match, response if isinstance(response, str) else json.dumps(response))


def mock_gateway(rules=(), **kwargs: Any) -> Gateway:
    provider_kwargs = {k: kwargs.pop(k) for k in ("dimension", "fail_first") if k in kwargs}
    return Gateway(MockProvider(list(rules), **provider_kwargs), sleep=lambda _s: None, **kwargs)


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURE_DIR
