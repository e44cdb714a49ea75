"""Provider clients for chat, embedding, and rerank calls.

One client fronts every upstream service with content-addressed caching,
single-flight deduplication, bounded parallelism, and bounded retries.
Transports are swappable: an HTTP transport speaks the common
chat-completions wire shape, and a deterministic mock transport makes the
whole pipeline runnable offline, where every response is a pure function
of (seed, request).
"""

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "CLAIMBENCH_API_KEY"

_ROLES = ("system", "user", "assistant")
_DEFAULT_RESPONSE_PATH: Tuple[Any, ...] = ("choices", 0, "message", "content")


class ProviderError(RuntimeError):
    """Upstream service failure; carries the HTTP status when one exists."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class TransportError(ProviderError):
    """Network-level failure (connect, timeout, protocol)."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: Tuple[Tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        for role, content in self.messages:
            if role not in _ROLES:
                raise ValueError(f"unknown message role {role!r}")
            if not isinstance(content, str):
                raise ValueError("message content must be a string")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be within [0, 2], got {self.temperature}")


@dataclass(frozen=True)
class EmbeddingRequest:
    model: str
    inputs: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if not self.inputs:
            raise ValueError("embedding request needs at least one input")


@dataclass(frozen=True)
class RerankRequest:
    model: str
    query: str
    candidates: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("rerank request needs at least one candidate")


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    cached: bool
    latency_ms: int


def _normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def chat_key(request: ChatRequest) -> str:
    """Content hash of a chat request; prompt whitespace is normalized first."""
    return _digest({
        "kind": "chat",
        "model": request.model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [[role, _normalize_ws(content)] for role, content in request.messages],
    })


def embedding_key(model: str, text: str) -> str:
    return _digest({"kind": "embedding", "model": model, "text": text})


def rerank_key(request: RerankRequest) -> str:
    return _digest({
        "kind": "rerank",
        "model": request.model,
        "query": request.query,
        "candidates": list(request.candidates),
    })


class ResponseCache:
    """In-memory cache with optional content-addressed on-disk entries.

    Disk entries are one JSON file per request hash holding the hash, a
    timestamp, and the response payload. Corrupt entries fail closed: they
    are treated as misses and overwritten on the next fetch.
    """

    def __init__(self, directory: Optional[str] = None):
        self._memory: Dict[str, Any] = {}
        self._directory = directory
        if directory is not None:
            os.makedirs(directory, exist_ok=True)

    def get(self, key: str) -> Optional[Any]:
        if key in self._memory:
            return self._memory[key]
        if self._directory is None:
            return None
        path = os.path.join(self._directory, f"{key}.json")
        if not os.path.exists(path):
            return None
        try:
            with open(path, encoding="utf-8") as handle:
                entry = json.load(handle)
            if entry.get("hash") != key or "value" not in entry:
                raise ValueError("entry does not match its address")
        except (ValueError, OSError) as exc:
            logger.warning("discarding corrupt cache entry %s: %s", path, exc)
            return None
        self._memory[key] = entry["value"]
        return entry["value"]

    def put(self, key: str, kind: str, value: Any) -> None:
        self._memory[key] = value
        if self._directory is None:
            return
        entry = {
            "hash": key,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "kind": kind,
            "value": value,
        }
        path = os.path.join(self._directory, f"{key}.json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(entry, handle, ensure_ascii=False)


class ProviderClient:
    """Uniform provider front-end: cache, single-flight, retry, parallelism bound.

    Identical concurrent requests collapse onto one upstream call via
    per-key locks; distinct requests run in parallel up to `parallelism`.
    Transient failures (transport errors, 429, 5xx) are retried with
    exponential backoff starting at `backoff_s`.
    """

    def __init__(self, transport, cache: Optional[ResponseCache] = None,
                 parallelism: int = 8, retries: int = 3, backoff_s: float = 0.5):
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if retries < 1:
            raise ValueError("retries must be at least 1")
        self._transport = transport
        self._cache = cache if cache is not None else ResponseCache()
        self._semaphore = threading.BoundedSemaphore(parallelism)
        self._retries = retries
        self._backoff_s = backoff_s
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.parallelism = parallelism

    def chat(self, request: ChatRequest) -> ProviderResponse:
        key = chat_key(request)
        value, cached, elapsed_ms = self._fetch(key, "chat", lambda: self._transport.chat(request))
        if not isinstance(value, str):
            raise ProviderError("chat transport returned a non-string response")
        return ProviderResponse(text=value, cached=cached, latency_ms=elapsed_ms)

    def embed(self, request: EmbeddingRequest) -> List[List[float]]:
        """Embed each input, caching per (model, text); one batched call for misses."""
        keys = [embedding_key(request.model, text) for text in request.inputs]
        batch_lock = self._lock_for(_digest({"kind": "embedding-batch", "keys": keys}))
        with batch_lock:
            missing: List[str] = []
            for text, key in zip(request.inputs, keys):
                if self._cache.get(key) is None and text not in missing:
                    missing.append(text)
            if missing:
                call = lambda: self._transport.embed(replace(request, inputs=tuple(missing)))
                with self._semaphore:
                    vectors = self._call_with_retries(call)
                if len(vectors) != len(missing):
                    raise ProviderError(
                        f"embedding transport returned {len(vectors)} vectors "
                        f"for {len(missing)} inputs"
                    )
                for text, vector in zip(missing, vectors):
                    self._cache.put(embedding_key(request.model, text),
                                    "embedding", [float(x) for x in vector])
            result = []
            for key in keys:
                vector = self._cache.get(key)
                if vector is None:
                    raise ProviderError("embedding cache lost an entry mid-request")
                result.append(list(vector))
        dimensions = {len(v) for v in result}
        if len(dimensions) > 1:
            raise ProviderError(f"embedding dimension mismatch across batch: {sorted(dimensions)}")
        return result

    def rerank_scores(self, request: RerankRequest) -> List[float]:
        key = rerank_key(request)
        value, _, _ = self._fetch(key, "rerank", lambda: self._transport.rerank(request))
        if len(value) != len(request.candidates):
            raise ProviderError(
                f"rerank returned {len(value)} scores for {len(request.candidates)} candidates"
            )
        return [float(x) for x in value]

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _fetch(self, key: str, kind: str, call) -> Tuple[Any, bool, int]:
        with self._lock_for(key):
            hit = self._cache.get(key)
            if hit is not None:
                return hit, True, 0
            start = time.perf_counter()
            with self._semaphore:
                value = self._call_with_retries(call)
            elapsed_ms = int((time.perf_counter() - start) * 1000)
            self._cache.put(key, kind, value)
            return value, False, elapsed_ms

    def _call_with_retries(self, call):
        delay = self._backoff_s
        for attempt in range(1, self._retries + 1):
            try:
                return call()
            except ProviderError as exc:
                if attempt == self._retries or not self._retryable(exc):
                    raise
                logger.warning("provider call failed (attempt %d/%d): %s",
                               attempt, self._retries, exc)
                time.sleep(delay)
                delay *= 2

    @staticmethod
    def _retryable(exc: ProviderError) -> bool:
        if isinstance(exc, TransportError):
            return True
        return exc.status is not None and (exc.status == 429 or exc.status >= 500)


def _dig(data: Any, path: Sequence[Any]) -> Any:
    value = data
    for step in path:
        try:
            value = value[step]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: missing {step!r} in path {list(path)}") from exc
    return value


class HttpTransport:
    """JSON-over-HTTP transport speaking the common chat-completions shape.

    Chat: POST {model, messages, temperature} to `endpoint`; the response
    text is extracted from `response_path`. Embedding and rerank endpoints
    use the common {model, input} / {model, query, documents} shapes.
    """

    def __init__(self, endpoint: str, api_key: Optional[str] = None,
                 response_path: Sequence[Any] = _DEFAULT_RESPONSE_PATH,
                 embed_endpoint: Optional[str] = None,
                 rerank_endpoint: Optional[str] = None,
                 timeout: float = 30.0, client: Optional[httpx.Client] = None):
        self._endpoint = endpoint
        self._api_key = api_key
        self._response_path = tuple(response_path)
        self._embed_endpoint = embed_endpoint
        self._rerank_endpoint = rerank_endpoint
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def _post(self, url: str, payload: dict) -> Any:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            response = self._client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise ProviderError(
                f"provider returned status {response.status_code} for {url}",
                status=response.status_code,
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ProviderError(f"provider returned non-JSON body from {url}") from exc

    def chat(self, request: ChatRequest) -> str:
        payload: dict = {
            "model": request.model,
            "messages": [{"role": role, "content": content} for role, content in request.messages],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        data = self._post(self._endpoint, payload)
        text = _dig(data, self._response_path)
        if not isinstance(text, str):
            raise ProviderError("chat response field is not a string")
        return text

    def embed(self, request: EmbeddingRequest) -> List[List[float]]:
        if not self._embed_endpoint:
            raise ProviderError("no embedding endpoint configured")
        data = self._post(self._embed_endpoint, {"model": request.model,
                                                 "input": list(request.inputs)})
        rows = _dig(data, ("data",))
        rows = sorted(rows, key=lambda row: row.get("index", 0))
        return [[float(x) for x in row["embedding"]] for row in rows]

    def rerank(self, request: RerankRequest) -> List[float]:
        if not self._rerank_endpoint:
            raise ProviderError("no rerank endpoint configured")
        data = self._post(self._rerank_endpoint, {"model": request.model,
                                                  "query": request.query,
                                                  "documents": list(request.candidates)})
        rows = sorted(_dig(data, ("results",)), key=lambda row: row.get("index", 0))
        return [float(row["relevance_score"]) for row in rows]


_SLANG = ("fr", "ngl", "tbh", "smh", "innit", "lah")


class MockTransport:
    """Deterministic offline transport: responses are pure functions of (seed, request).

    At temperature 0 the seed is ignored entirely, so deterministic stages
    (verification, normalization) give identical output across differently
    seeded runs. Prompt kinds are recognized by their format markers.
    """

    def __init__(self, seed: int = 0, embedding_dim: int = 8):
        if embedding_dim < 1:
            raise ValueError("embedding_dim must be at least 1")
        self.seed = seed
        self.embedding_dim = embedding_dim

    def _rng(self, request: ChatRequest) -> random.Random:
        material = chat_key(request)
        if request.temperature > 0:
            material = f"{material}|seed={self.seed}"
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def chat(self, request: ChatRequest) -> str:
        prompt = "\n".join(content for _, content in request.messages)
        if "Normalised Claim:" in prompt:
            return self._normalize_response(prompt)
        if '"labels"' in prompt:
            return self._verify_response(prompt)
        if "Rewritten Tweet" in prompt:
            return self._perturb_response(prompt, self._rng(request))
        digest = hashlib.sha256(chat_key(request).encode("utf-8")).hexdigest()
        return f"mock response {digest[:12]}"

    def embed(self, request: EmbeddingRequest) -> List[List[float]]:
        return [self._vector(request.model, text) for text in request.inputs]

    def rerank(self, request: RerankRequest) -> List[float]:
        query_tokens = set(re.findall(r"[^\W_]+", request.query.lower()))
        scores = []
        for candidate in request.candidates:
            cand_tokens = set(re.findall(r"[^\W_]+", candidate.lower()))
            union = query_tokens | cand_tokens
            overlap = len(query_tokens & cand_tokens) / len(union) if union else 0.0
            jitter_byte = hashlib.sha256(
                f"rerank|{request.query}|{candidate}".encode("utf-8")).digest()[0]
            scores.append(overlap + jitter_byte / 255.0 * 1e-6)
        return scores

    def _vector(self, model: str, text: str) -> List[float]:
        material = f"embed|{model}|{text}".encode("utf-8")
        raw: List[float] = []
        block = 0
        while len(raw) < self.embedding_dim:
            digest = hashlib.sha256(material + f"|{block}".encode()).digest()
            for i in range(0, len(digest) - 1, 2):
                raw.append(int.from_bytes(digest[i:i + 2], "little", signed=True))
                if len(raw) == self.embedding_dim:
                    break
            block += 1
        norm = sum(x * x for x in raw) ** 0.5
        if norm == 0.0:
            raw[0] = 1.0
            norm = 1.0
        return [x / norm for x in raw]

    @staticmethod
    def _last_match(pattern: str, prompt: str) -> str:
        matches = re.findall(pattern, prompt, flags=re.MULTILINE)
        return matches[-1].strip() if matches else ""

    def _perturb_response(self, prompt: str, rng: random.Random) -> str:
        claim = self._last_match(r"^Tweet:\s*(.*)$", prompt)
        if not claim:
            return "Rewritten Tweet 1: mock rewrite"
        lines = []
        seen = set()
        for index in range(1, 6):
            words = claim.split()
            for _ in range(index):
                words = self._mutate(words, rng)
            text = " ".join(words)
            attempts = 0
            while text in seen and attempts < 5:
                text = " ".join(self._mutate(text.split(), rng))
                attempts += 1
            if text in seen:
                text = f"{text} {rng.choice(_SLANG)}"
            seen.add(text)
            lines.append(f"Rewritten Tweet {index}: {text}")
        return "\n".join(lines)

    @staticmethod
    def _mutate(words: List[str], rng: random.Random) -> List[str]:
        words = list(words) or ["claim"]
        ops = ["dup", "typo", "slang"]
        if len(words) >= 2:
            ops.append("swap")
        if len(words) >= 4:
            ops.append("drop")
        op = rng.choice(ops)
        if op == "swap":
            i = rng.randrange(len(words) - 1)
            words[i], words[i + 1] = words[i + 1], words[i]
        elif op == "drop":
            del words[rng.randrange(len(words))]
        elif op == "dup":
            i = rng.randrange(len(words))
            words.insert(i, words[i])
        elif op == "typo":
            i = rng.randrange(len(words))
            word = words[i]
            if len(word) >= 3:
                j = rng.randrange(len(word) - 1)
                word = word[:j] + word[j + 1] + word[j] + word[j + 2:]
            else:
                word = word + rng.choice("aeiou")
            words[i] = word
        else:
            words.append(rng.choice(_SLANG))
        return words

    def _verify_response(self, prompt: str) -> str:
        claim = self._last_match(r"^Original Tweet:\s*(.*)$", prompt)
        rewrites: List[str] = []
        match = re.search(r"Rewritten Tweets:\s*(\[.*\])", prompt, flags=re.DOTALL)
        if match:
            try:
                parsed = json.loads(match.group(1))
                if isinstance(parsed, list):
                    rewrites = [str(item) for item in parsed]
            except ValueError:
                rewrites = []
        labels = []
        for rewrite in rewrites:
            digest = hashlib.sha256(f"verify|{claim}|{rewrite}".encode("utf-8")).digest()
            labels.append(0 if digest[0] % 8 == 0 else 1)
        return json.dumps({"labels": labels})

    def _normalize_response(self, prompt: str) -> str:
        claim = self._last_match(r"^Noisy Claim:\s*(.*)$", prompt)
        cleaned = re.sub(r"\s+", " ", claim).strip()
        if cleaned and not cleaned[0].isupper():
            cleaned = cleaned[0].upper() + cleaned[1:]
        if cleaned and cleaned[-1] not in ".!?":
            cleaned = cleaned + "."
        return f"Normalised Claim: {cleaned}"


class Embedder:
    """Callable adapter binding a provider client to an embedding model tag."""

    def __init__(self, client: ProviderClient, model: str):
        self._client = client
        self.model = model

    def __call__(self, texts: Sequence[str]) -> List[List[float]]:
        return self._client.embed(EmbeddingRequest(model=self.model, inputs=tuple(texts)))


class RerankScorer:
    """Callable adapter binding a provider client to a rerank model tag."""

    def __init__(self, client: ProviderClient, model: str):
        self._client = client
        self.model = model

    def __call__(self, query: str, candidates: Sequence[str]) -> List[float]:
        return self._client.rerank_scores(
            RerankRequest(model=self.model, query=query, candidates=tuple(candidates)))


@dataclass(frozen=True)
class ProviderSettings:
    """Provider section of a run configuration."""

    kind: str = "mock"
    model: str = "mock-chat"
    embedding_model: str = "mock-embed"
    rerank_model: str = "mock-rerank"
    endpoint: Optional[str] = None
    embed_endpoint: Optional[str] = None
    rerank_endpoint: Optional[str] = None
    response_path: Tuple[Any, ...] = _DEFAULT_RESPONSE_PATH
    parallelism: int = 8
    cache_dir: Optional[str] = None
    embedding_dim: int = 8
    timeout: float = 30.0


def build_provider(settings: ProviderSettings, seed: int = 0) -> ProviderClient:
    """Construct a client from settings; API keys come from the environment only."""
    if settings.kind == "mock":
        transport = MockTransport(seed=seed, embedding_dim=settings.embedding_dim)
    elif settings.kind == "http":
        if not settings.endpoint:
            raise ProviderError("provider kind 'http' requires provider.endpoint")
        transport = HttpTransport(
            endpoint=settings.endpoint,
            api_key=os.environ.get(API_KEY_ENV),
            response_path=settings.response_path,
            embed_endpoint=settings.embed_endpoint,
            rerank_endpoint=settings.rerank_endpoint,
            timeout=settings.timeout,
        )
    else:
        raise ProviderError(f"unknown provider kind {settings.kind!r}")
    cache = ResponseCache(settings.cache_dir)
    return ProviderClient(transport, cache=cache, parallelism=settings.parallelism)
