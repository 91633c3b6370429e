"""Chat-completion and embedding gateway with an on-disk response cache.

Every LLM call in the package goes through :class:`Gateway`.  Requests are
content-addressed (sha256 over model, temperature and messages), so replaying a
run against a warm cache issues no provider calls at all.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence, TypeVar

import httpx

from .domain import SubqragError
from .records import atomic_write_text
from .templates import REASK_SUFFIX

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

API_KEY_ENV = "SUBQRAG_API_KEY"


class ProviderError(SubqragError):
    pass


class TransientProviderError(ProviderError):
    """Worth retrying: rate limits, timeouts, 5xx."""


class DecodeError(ProviderError):
    """The provider answered, but not in a shape we can read."""


class ConfigurationError(SubqragError):
    pass


class ParseFailure(ValueError):
    """Raised by completion parsers; triggers a single re-ask."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user"):
            raise ValueError(f"unsupported message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    model: str = "default"

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a chat request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def user(cls, prompt: str, **kwargs: Any) -> "ChatRequest":
        return cls(messages=(Message("user", prompt),), **kwargs)

    @property
    def text(self) -> str:
        return "\n".join(m.content for m in self.messages)

    def digest(self) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [[m.role, m.content] for m in self.messages],
        }
        return _sha256(payload)


def _sha256(payload: Any) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def embed_digest(model: str, text: str) -> str:
    return _sha256({"kind": "embed", "model": model, "text": text})


class ResponseCache:
    """Content-addressed store of responses.

    With ``directory=None`` entries live in memory only. On disk each entry is
    one JSON file written via temp-file-then-rename. Nothing is ever evicted.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, Any] = {}
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        assert self.directory is not None
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Any | None:
        if self.directory is None:
            with self._lock:
                return self._mem.get(key)
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))["value"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            logger.warning("ignoring unreadable cache entry %s", path)
            return None

    def put(self, key: str, value: Any) -> None:
        if self.directory is None:
            with self._lock:
                self._mem[key] = value
            return
        atomic_write_text(self._path(key), json.dumps({"value": value}, ensure_ascii=False))

    def __len__(self) -> int:
        if self.directory is None:
            return len(self._mem)
        return sum(1 for _ in self.directory.glob("*/*.json")) if self.directory.exists() else 0


class Provider(Protocol):
    dimension: int | None

    def complete(self, request: ChatRequest) -> str: ...

    def embed(self, text: str) -> list[float]: ...


_HEX64 = re.compile(r"[0-9a-f]{64}")
_TOKEN = re.compile(r"[a-z0-9]+")


def hashed_embedding(text: str, dimension: int = 64) -> list[float]:
    """Deterministic signed bag-of-words hash embedding; used by the mock provider."""
    vec = [0.0] * dimension
    for tok in _TOKEN.findall(text.lower()):
        h = hashlib.sha256(tok.encode()).digest()
        idx = int.from_bytes(h[:4], "big") % dimension
        vec[idx] += 1.0 if h[4] & 1 else -1.0
    return vec


@dataclass
class MockRule:
    match: str | list[str]
    response: str | None = None
    embedding: list[float] | None = None

    def matches_request(self, request: ChatRequest, digest: str) -> bool:
        if isinstance(self.match, str) and _HEX64.fullmatch(self.match):
            return self.match == digest
        needles = [self.match] if isinstance(self.match, str) else self.match
        text = request.text
        return all(n in text for n in needles)


class MockProvider:
    """Scripted offline provider.

    Chat rules are tried in order and the first match wins. A rule matches when
    its ``match`` equals the request digest, or when every given substring occurs
    in the request text (so ``""`` is a catch-all). Embedding rules map an exact
    text to a vector; other texts get :func:`hashed_embedding`.
    """

    def __init__(
        self,
        rules: Iterable[MockRule] = (),
        *,
        dimension: int | None = 64,
        fail_first: int = 0,
    ):
        self.rules = list(rules)
        self.chat_rules = [r for r in self.rules if r.response is not None]
        self.embeddings = {r.match: list(r.embedding) for r in self.rules
                           if r.embedding is not None and isinstance(r.match, str)}
        self.dimension = dimension
        self.fail_first = fail_first
        self.calls: list[ChatRequest] = []
        self.embed_calls: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: str | Path, **kwargs: Any) -> "MockProvider":
        rules = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "match" not in row or ("response" not in row and "embedding" not in row):
                raise ConfigurationError(f"{path}:{lineno}: mock rule needs match and response|embedding")
            resp = row.get("response")
            if resp is not None and not isinstance(resp, str):
                resp = json.dumps(resp)
            rules.append(MockRule(match=row["match"], response=resp, embedding=row.get("embedding")))
        if "dimension" not in kwargs:
            dims = {len(r.embedding) for r in rules if r.embedding is not None}
            if len(dims) == 1:
                kwargs["dimension"] = dims.pop()
        return cls(rules, **kwargs)

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
            if self.fail_first > 0:
                self.fail_first -= 1
                raise TransientProviderError("scripted transient failure")
        digest = request.digest()
        for rule in self.chat_rules:
            if rule.matches_request(request, digest):
                return rule.response  # type: ignore[return-value]
        raise ProviderError(f"mock provider has no rule for request {digest[:12]}: "
                            f"{request.text[-200:]!r}")

    def embed(self, text: str) -> list[float]:
        with self._lock:
            self.embed_calls.append(text)
        if text in self.embeddings:
            return list(self.embeddings[text])
        return hashed_embedding(text, self.dimension or 64)


class HttpProvider:
    """OpenAI-compatible ``/chat/completions`` and ``/embeddings`` client."""

    def __init__(
        self,
        base_url: str,
        *,
        chat_model: str,
        embed_model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        dimension: int | None = None,
        client: httpx.Client | None = None,
    ):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise ConfigurationError(f"live provider needs ${API_KEY_ENV}")
        self.chat_model = chat_model
        self.embed_model = embed_model
        self.dimension = dimension
        self._client = client or httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def _post(self, path: str, payload: dict[str, Any]) -> Any:
        try:
            resp = self._client.post(path, json=payload, headers=self._headers)
        except httpx.TransportError as exc:
            raise TransientProviderError(f"{path}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"{path}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise DecodeError(f"{path}: response is not JSON") from exc

    def complete(self, request: ChatRequest) -> str:
        body = self._post("/chat/completions", {
            "model": request.model if request.model != "default" else self.chat_model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise DecodeError("chat response lacks choices[0].message.content") from exc
        if not isinstance(content, str):
            raise DecodeError("chat completion content is not a string")
        return content

    def embed(self, text: str) -> list[float]:
        body = self._post("/embeddings", {"model": self.embed_model, "input": text})
        try:
            vec = body["data"][0]["embedding"]
            return [float(x) for x in vec]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise DecodeError("embedding response lacks data[0].embedding") from exc


@dataclass
class GatewayStats:
    provider_calls: int = 0
    cache_hits: int = 0
    embed_calls: int = 0
    embed_cache_hits: int = 0


class Gateway:
    def __init__(
        self,
        provider: Provider,
        cache: ResponseCache | None = None,
        *,
        model: str = "default",
        embed_model: str = "default",
        retry_limit: int = 3,
        max_in_flight: int = 8,
        backoff_base: float = 0.5,
        max_tokens: int = 1024,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if retry_limit < 1 or max_in_flight < 1:
            raise ConfigurationError("retry_limit and max_in_flight must be >= 1")
        self.provider = provider
        self.cache = cache if cache is not None else ResponseCache()
        self.model = model
        self.embed_model = embed_model
        self.retry_limit = retry_limit
        self.max_in_flight = max_in_flight
        self.backoff_base = backoff_base
        self.max_tokens = max_tokens
        self.stats = GatewayStats()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._stats_lock = threading.Lock()
        self._dimension: int | None = getattr(provider, "dimension", None)

    def request(self, prompt: str) -> ChatRequest:
        return ChatRequest.user(prompt, temperature=0.0, max_tokens=self.max_tokens, model=self.model)

    def _with_retries(self, what: str, fn: Callable[[], T]) -> T:
        for attempt in range(1, self.retry_limit + 1):
            try:
                with self._slots:
                    return fn()
            except TransientProviderError as exc:
                if attempt == self.retry_limit:
                    raise ProviderError(f"{what}: gave up after {attempt} attempts: {exc}") from exc
                delay = self.backoff_base * 2 ** (attempt - 1)
                logger.info("%s: transient failure (%s); retry %d in %.2fs", what, exc, attempt, delay)
                self._sleep(delay)
        raise AssertionError("unreachable")

    def _count(self, **deltas: int) -> None:
        with self._stats_lock:
            for k, v in deltas.items():
                setattr(self.stats, k, getattr(self.stats, k) + v)

    def chat(self, request: ChatRequest | str) -> str:
        if isinstance(request, str):
            request = self.request(request)
        key = request.digest()
        cached = self.cache.get(key)
        if cached is not None:
            self._count(cache_hits=1)
            return cached

        def call() -> str:
            self._count(provider_calls=1)
            return self.provider.complete(request)

        text = self._with_retries("chat", call)
        if not isinstance(text, str):
            raise DecodeError(f"provider returned {type(text).__name__}, expected text")
        self.cache.put(key, text)
        return text

    def ask(self, prompt: str, parse: Callable[[str], T], error: type[SubqragError]) -> T:
        """Chat, parse, and re-ask once if the completion does not parse."""
        first = self.chat(prompt)
        try:
            return parse(first)
        except ParseFailure as exc:
            logger.info("re-asking after unparseable completion: %s", exc)
        second = self.chat(prompt + REASK_SUFFIX)
        try:
            return parse(second)
        except ParseFailure as exc:
            raise error(f"unparseable completion after re-ask: {exc}; got {second[:200]!r}") from exc

    def embed(self, text: str) -> list[float]:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        key = embed_digest(self.embed_model, text)
        cached = self.cache.get(key)
        if cached is not None:
            self._count(embed_cache_hits=1)
            vec = [float(x) for x in cached]
        else:
            def call() -> list[float]:
                self._count(embed_calls=1)
                return self.provider.embed(text)

            vec = [float(x) for x in self._with_retries("embed", call)]
            self.cache.put(key, vec)
        self._check_dimension(vec)
        return vec

    def _check_dimension(self, vec: Sequence[float]) -> None:
        with self._stats_lock:
            if self._dimension is None:
                self._dimension = len(vec)
            elif len(vec) != self._dimension:
                raise ConfigurationError(
                    f"embedding dimension {len(vec)} differs from expected {self._dimension}")

    def embed_many(self, texts: Sequence[str]) -> list[list[float]]:
        vectors = self.map(self.embed, texts)
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise ConfigurationError(f"mixed embedding dimensions in corpus: {sorted(dims)}")
        return vectors

    def map(self, fn: Callable[[T], R], items: Sequence[T], *, return_exceptions: bool = False) -> list[Any]:
        """Apply ``fn`` concurrently; results keep input order."""
        items = list(items)
        if len(items) <= 1 or self.max_in_flight == 1:
            return [_call(fn, x, return_exceptions) for x in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(lambda x: _call(fn, x, return_exceptions), items))


def _call(fn: Callable[[T], R], x: T, return_exceptions: bool) -> Any:
    if not return_exceptions:
        return fn(x)
    try:
        return fn(x)
    except SubqragError as exc:
        return exc


_FENCE = re.compile(r"```(?:json)?\s*(.*?)\s*```", re.DOTALL)


def extract_json(text: str) -> Any:
    """Decode the first JSON value in a completion, tolerating code fences and chatter."""
    m = _FENCE.search(text)
    if m:
        text = m.group(1)
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                return decoder.raw_decode(text, i)[0]
            except json.JSONDecodeError:
                continue
    raise ParseFailure("no JSON value found")
