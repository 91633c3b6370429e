from __future__ import annotations

import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mock_gateway, rule
from subqrag.gateway import (
    ChatRequest,
    ConfigurationError,
    DecodeError,
    Gateway,
    HttpProvider,
    Message,
    MockProvider,
    MockRule,
    ProviderError,
    ResponseCache,
    TransientProviderError,
    extract_json,
)
from subqrag.templates import CLASSIFY, COVERAGE, DECOMPOSE, JUDGE_PAIR, TemplateError, render


def test_render_decompose():
    out = render(DECOMPOSE, {"question": "Q", "target-count": 20})
    assert "Complex question: Q" in out
    assert "around 20 sub-questions" in out


def test_render_classify_missing_binding():
    with pytest.raises(TemplateError, match=r"\$sub-question"):
        render(CLASSIFY, {"question": "Q", "few-shot-examples": ""})


def test_render_coverage_contains_both():
    out = render(COVERAGE, {"text": "T", "sub-question": "S", "few-shot-examples": ""})
    assert "Piece of text: T" in out and "Question: S" in out


def test_render_does_not_rescan_values():
    out = render(COVERAGE, {"text": "$sub-question", "sub-question": "S", "few-shot-examples": ""})
    assert "Piece of text: $sub-question" in out


values = st.text(alphabet=st.characters(blacklist_characters="$"), max_size=30)


@given(values, values, values, values)
def test_render_injective(t1, s1, t2, s2):
    b1 = {"text": t1, "sub-question": s1, "few-shot-examples": "E"}
    b2 = {"text": t2, "sub-question": s2, "few-shot-examples": "E"}
    if (t1, s1) != (t2, s2):
        assert render(COVERAGE, b1) != render(COVERAGE, b2)


def test_judge_template_labels():
    out = render(JUDGE_PAIR, {"question": "Q", "response-a": "first", "response-b": "second"})
    assert "Response A: first" in out and "Response B: second" in out


def test_chat_request_needs_user_message():
    with pytest.raises(ValueError):
        ChatRequest((Message("system", "x"),))


def test_digest_stable_and_sensitive():
    a = ChatRequest.user("hello")
    assert a.digest() == ChatRequest.user("hello").digest()
    assert a.digest() != ChatRequest.user("hello", temperature=0.5).digest()
    assert a.digest() != ChatRequest.user("hello", model="other").digest()


def test_cache_hit_skips_provider():
    gw = mock_gateway([rule("", "A")])
    assert gw.chat("prompt") == "A"
    assert gw.chat("prompt") == "A"
    assert gw.stats.provider_calls == 1 and gw.stats.cache_hits == 1


def test_digest_rule():
    d = Gateway(MockProvider()).request("exact prompt").digest()
    gw = mock_gateway([rule(d, "A"), rule("", "Z")])
    assert gw.chat("exact prompt") == "A"
    assert gw.chat("another prompt") == "Z"


def test_substring_list_rule_needs_all():
    gw = mock_gateway([rule(["alpha", "beta"], "both"), rule("alpha", "one")])
    assert gw.chat("alpha and beta") == "both"
    assert gw.chat("alpha only") == "one"


def test_flaky_provider_recovers():
    sleeps = []
    gw = Gateway(MockProvider([rule("", "B")], fail_first=2), retry_limit=3, sleep=sleeps.append,
                 backoff_base=0.5)
    assert gw.chat("x") == "B"
    assert sleeps == [0.5, 1.0]
    assert gw.stats.provider_calls == 3


def test_retries_exhausted():
    gw = mock_gateway([rule("", "B")], fail_first=3, retry_limit=3)
    with pytest.raises(ProviderError):
        gw.chat("x")


def test_unmatched_mock_request_is_provider_error():
    with pytest.raises(ProviderError):
        mock_gateway([rule("needle", "x")]).chat("haystack")


def test_non_text_completion_is_decode_error():
    class Weird:
        dimension = None

        def complete(self, request):
            return {"not": "text"}

        def embed(self, text):
            return [1.0]

    with pytest.raises(DecodeError):
        Gateway(Weird()).chat("x")


def test_ask_reasks_once():
    gw = mock_gateway([rule("could not be parsed", '{"ok": 1}'), rule("", "garbage")])

    def parse(s):
        return extract_json(s)["ok"]

    assert gw.ask("question", parse, ProviderError) == 1
    assert gw.stats.provider_calls == 2


def test_ask_gives_up_after_reask():
    gw = mock_gateway([rule("", "garbage")])
    with pytest.raises(ProviderError):
        gw.ask("question", lambda s: extract_json(s)["ok"], ProviderError)


def test_mock_embeddings():
    gw = mock_gateway([MockRule("a", embedding=[1, 0]), MockRule("b", embedding=[0, 1])], dimension=2)
    assert gw.embed("a") == [1.0, 0.0]
    assert gw.embed("b") == [0.0, 1.0]
    assert gw.embed("a") == [1.0, 0.0]
    assert gw.stats.embed_calls == 2 and gw.stats.embed_cache_hits == 1


def test_mixed_dimensions_is_configuration_error():
    gw = mock_gateway([MockRule("a", embedding=[1, 0]), MockRule("b", embedding=[0, 1, 0])],
                      dimension=None)
    with pytest.raises(ConfigurationError):
        gw.embed_many(["a", "b"])


def test_disk_cache_survives_new_gateway(tmp_path):
    provider = MockProvider([rule("", "A")])
    Gateway(provider, ResponseCache(tmp_path)).chat("p")
    gw2 = Gateway(MockProvider([]), ResponseCache(tmp_path))
    assert gw2.chat("p") == "A"
    assert gw2.stats.provider_calls == 0
    assert len(ResponseCache(tmp_path)) == 1


def test_corrupt_cache_entry_is_ignored(tmp_path):
    cache = ResponseCache(tmp_path)
    key = ChatRequest.user("p").digest()
    cache.put(key, "A")
    next(tmp_path.glob("*/*.json")).write_text("{broken", encoding="utf-8")
    assert cache.get(key) is None


def test_concurrent_cache_writes(tmp_path):
    cache = ResponseCache(tmp_path)

    def work(i):
        for _ in range(20):
            cache.put("k" * 64, f"value-{i}")

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert cache.get("k" * 64).startswith("value-")


def test_map_preserves_order_and_bounds_in_flight():
    active, peak, lock = [0], [0], threading.Lock()

    class Slow:
        dimension = None

        def complete(self, request):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            import time
            time.sleep(0.01)
            with lock:
                active[0] -= 1
            return request.text

        def embed(self, text):
            return [1.0]

    gw = Gateway(Slow(), max_in_flight=3)
    out = gw.map(lambda i: gw.chat(f"p{i}"), range(20))
    assert out == [f"p{i}" for i in range(20)]
    assert peak[0] <= 3


def test_mock_from_jsonl(tmp_path):
    p = tmp_path / "mock.jsonl"
    p.write_text(json.dumps({"match": "x", "response": {"winner": "A"}}) + "\n"
                 + json.dumps({"match": "e", "embedding": [0.5, 0.5]}) + "\n", encoding="utf-8")
    prov = MockProvider.from_jsonl(p)
    assert prov.dimension == 2
    gw = Gateway(prov)
    assert json.loads(gw.chat("x")) == {"winner": "A"}
    assert gw.embed("e") == [0.5, 0.5]


def test_mock_from_jsonl_rejects_bad_rule(tmp_path):
    p = tmp_path / "mock.jsonl"
    p.write_text(json.dumps({"match": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        MockProvider.from_jsonl(p)


def test_extract_json_variants():
    assert extract_json('```json\n{"a": 1}\n```') == {"a": 1}
    assert extract_json('Sure! {"a": [1, 2]} hope that helps') == {"a": [1, 2]}


def _http(handler, monkeypatch):
    monkeypatch.setenv("SUBQRAG_API_KEY", "test-key")
    return HttpProvider("https://llm.test/v1", chat_model="m", embed_model="e",
                        client=httpx.Client(base_url="https://llm.test/v1",
                                            transport=httpx.MockTransport(handler)))


def test_http_provider_chat_and_embed(monkeypatch):
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(request)
        body = json.loads(request.content)
        if request.url.path.endswith("/chat/completions"):
            assert body["temperature"] == 0.0 and body["model"] == "m"
            return httpx.Response(200, json={"choices": [{"message": {"content": "hi"}}]})
        return httpx.Response(200, json={"data": [{"embedding": [0.1, 0.2]}]})

    prov = _http(handler, monkeypatch)
    gw = Gateway(prov)
    assert gw.chat("hello") == "hi"
    assert gw.embed("text") == [0.1, 0.2]
    assert seen[0].headers["authorization"] == "Bearer test-key"


def test_http_provider_transient_then_ok(monkeypatch):
    calls = [0]

    def handler(request):
        calls[0] += 1
        if calls[0] == 1:
            return httpx.Response(503)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    gw = Gateway(_http(handler, monkeypatch), sleep=lambda _s: None)
    assert gw.chat("x") == "ok"
    assert calls[0] == 2


def test_http_provider_malformed_body(monkeypatch):
    prov = _http(lambda r: httpx.Response(200, json={"unexpected": True}), monkeypatch)
    with pytest.raises(DecodeError):
        Gateway(prov).chat("x")


def test_http_provider_client_error_not_retried(monkeypatch):
    calls = [0]

    def handler(request):
        calls[0] += 1
        return httpx.Response(400, json={"error": "bad"})

    with pytest.raises(ProviderError) as exc:
        Gateway(_http(handler, monkeypatch), sleep=lambda _s: None).chat("x")
    assert not isinstance(exc.value, TransientProviderError)
    assert calls[0] == 1


def test_http_provider_needs_key(monkeypatch):
    monkeypatch.delenv("SUBQRAG_API_KEY", raising=False)
    with pytest.raises(ConfigurationError):
        HttpProvider("https://llm.test/v1", chat_model="m", embed_model="e")
