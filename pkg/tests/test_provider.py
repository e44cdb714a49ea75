import json
import threading

import httpx
import pytest

from claimbench.provider import (ChatRequest, Embedder, EmbeddingRequest, HttpTransport,
                                 MockTransport, ProviderClient, ProviderError,
                                 ProviderSettings, RerankRequest, RerankScorer,
                                 ResponseCache, TransportError, build_provider,
                                 chat_key, embedding_key)
from helpers import ScriptedTransport


def _chat(prompt, temperature=0.0, model="m"):
    return ChatRequest(model=model, messages=(("user", prompt),), temperature=temperature)


def test_chat_request_validation():
    with pytest.raises(ValueError, match="at least one message"):
        ChatRequest(model="m", messages=())
    with pytest.raises(ValueError, match="unknown message role"):
        ChatRequest(model="m", messages=(("robot", "hi"),))
    with pytest.raises(ValueError, match="temperature"):
        ChatRequest(model="m", messages=(("user", "hi"),), temperature=3.0)
    request = ChatRequest(model="m", messages=[["user", "hi"]])
    assert request.messages == (("user", "hi"),)


def test_request_dataclasses_require_content():
    with pytest.raises(ValueError):
        EmbeddingRequest(model="m", inputs=())
    with pytest.raises(ValueError):
        RerankRequest(model="m", query="q", candidates=())


def test_chat_key_normalizes_whitespace_only():
    assert chat_key(_chat("a   b\n\tc")) == chat_key(_chat("a b c"))
    assert chat_key(_chat("a b c")) != chat_key(_chat("a b d"))
    assert chat_key(_chat("p", model="m1")) != chat_key(_chat("p", model="m2"))
    assert chat_key(_chat("p", temperature=0.0)) != chat_key(_chat("p", temperature=0.9))


def test_embedding_key_is_per_text():
    assert embedding_key("m", "a") != embedding_key("m", "b")
    assert embedding_key("m", "a") != embedding_key("n", "a")


def test_response_cache_disk_roundtrip(tmp_path):
    cache = ResponseCache(str(tmp_path))
    cache.put("k1", "chat", "value one")
    fresh = ResponseCache(str(tmp_path))
    assert fresh.get("k1") == "value one"
    assert fresh.get("missing") is None


def test_response_cache_corrupt_entry_is_a_miss(tmp_path):
    cache = ResponseCache(str(tmp_path))
    (tmp_path / "bad.json").write_text("{not json")
    assert cache.get("bad") is None
    (tmp_path / "wrong.json").write_text(json.dumps({"hash": "other", "value": 1}))
    assert cache.get("wrong") is None
    cache.put("wrong", "chat", "repaired")
    assert ResponseCache(str(tmp_path)).get("wrong") == "repaired"


def test_client_caches_chat_responses():
    transport = ScriptedTransport(chat=["hello"])
    client = ProviderClient(transport, backoff_s=0.001)
    first = client.chat(_chat("prompt"))
    second = client.chat(_chat("prompt"))
    assert first.text == second.text == "hello"
    assert first.cached is False
    assert second.cached is True
    assert len(transport.chat_calls) == 1


def test_client_retries_transient_failures():
    transport = ScriptedTransport(chat=[TransportError("net down"),
                                        ProviderError("busy", status=429), "ok"])
    client = ProviderClient(transport, retries=3, backoff_s=0.001)
    assert client.chat(_chat("p")).text == "ok"
    assert len(transport.chat_calls) == 3


def test_client_exhausts_retries_then_raises():
    transport = ScriptedTransport(chat=[ProviderError("boom", status=500)] * 3)
    client = ProviderClient(transport, retries=3, backoff_s=0.001)
    with pytest.raises(ProviderError, match="boom"):
        client.chat(_chat("p"))
    assert len(transport.chat_calls) == 3


def test_client_does_not_retry_client_errors():
    transport = ScriptedTransport(chat=[ProviderError("bad request", status=400), "never"])
    client = ProviderClient(transport, retries=3, backoff_s=0.001)
    with pytest.raises(ProviderError, match="bad request"):
        client.chat(_chat("p"))
    assert len(transport.chat_calls) == 1


def test_single_flight_collapses_identical_requests():
    barrier = threading.Barrier(8)

    def slow_response(request):
        return "shared"

    transport = ScriptedTransport(chat=[slow_response] + ["extra"] * 7)
    client = ProviderClient(transport, parallelism=8, backoff_s=0.001)
    results = []

    def worker():
        barrier.wait()
        results.append(client.chat(_chat("same prompt")).text)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert results == ["shared"] * 8
    assert len(transport.chat_calls) == 1


def test_embed_batches_misses_and_caches_per_text():
    transport = ScriptedTransport(embed=[lambda req: [[1.0, 0.0]] * len(req.inputs),
                                         lambda req: [[0.0, 1.0]] * len(req.inputs)])
    client = ProviderClient(transport)
    first = client.embed(EmbeddingRequest(model="m", inputs=("a", "b", "a")))
    assert first == [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]
    assert [list(call.inputs) for call in transport.embed_calls] == [["a", "b"]]
    second = client.embed(EmbeddingRequest(model="m", inputs=("b", "c")))
    assert second == [[1.0, 0.0], [0.0, 1.0]]
    assert [list(call.inputs) for call in transport.embed_calls] == [["a", "b"], ["c"]]


def test_embed_rejects_dimension_mismatch():
    transport = ScriptedTransport(embed=[[[1.0, 0.0], [1.0, 0.0, 0.0]]])
    client = ProviderClient(transport)
    with pytest.raises(ProviderError, match="dimension mismatch"):
        client.embed(EmbeddingRequest(model="m", inputs=("a", "b")))


def test_rerank_scores_validates_count():
    transport = ScriptedTransport(rerank=[[0.5]])
    client = ProviderClient(transport)
    with pytest.raises(ProviderError, match="2 candidates"):
        client.rerank_scores(RerankRequest(model="m", query="q", candidates=("a", "b")))


def test_mock_chat_is_deterministic_per_seed():
    prompt = "Rewrite the claim.\n\nResponse Format:\n- Rewritten Tweet 1: ...\n\n" \
             "Inputs:\nTweet: the quick brown fox jumps over the lazy dog\nFact Check: unrelated"
    request = _chat(prompt, temperature=0.9)
    assert MockTransport(seed=3).chat(request) == MockTransport(seed=3).chat(request)
    assert MockTransport(seed=3).chat(request) != MockTransport(seed=4).chat(request)


def test_mock_chat_temperature_zero_ignores_seed():
    prompt = "Respond with Normalised Claim: [x]\n\nNoisy Claim: SOME NOISY   claim"
    request = _chat(prompt, temperature=0.0)
    a = MockTransport(seed=1).chat(request)
    b = MockTransport(seed=99).chat(request)
    assert a == b
    assert a == "Normalised Claim: SOME NOISY claim."


def test_mock_embeddings_are_unit_norm_and_stable():
    mock = MockTransport(seed=0, embedding_dim=16)
    vectors = mock.embed(EmbeddingRequest(model="m", inputs=("alpha", "alpha", "beta")))
    assert vectors[0] == vectors[1] != vectors[2]
    for vector in vectors:
        assert len(vector) == 16
        assert sum(x * x for x in vector) == pytest.approx(1.0)


def test_mock_rerank_prefers_lexical_overlap():
    mock = MockTransport()
    scores = mock.rerank(RerankRequest(model="m", query="solar farm output",
                                       candidates=("solar farm output grew",
                                                   "unrelated knitting news")))
    assert scores[0] > scores[1]


def _http_transport(handler, **kwargs):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpTransport(endpoint="https://api.test/chat", client=client, **kwargs)


def test_http_transport_chat_payload_and_parsing():
    captured = {}

    def handler(request):
        captured["payload"] = json.loads(request.content)
        captured["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "reply"}}]})

    transport = _http_transport(handler, api_key="secret")
    text = transport.chat(ChatRequest(model="gpt-x", messages=(("system", "s"), ("user", "u")),
                                      temperature=0.5, max_tokens=64))
    assert text == "reply"
    assert captured["auth"] == "Bearer secret"
    assert captured["payload"] == {
        "model": "gpt-x",
        "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
        "temperature": 0.5,
        "max_tokens": 64,
    }


def test_http_transport_surfaces_status_and_network_errors():
    def error_handler(request):
        return httpx.Response(503, json={"error": "overloaded"})

    with pytest.raises(ProviderError) as excinfo:
        _http_transport(error_handler).chat(_chat("p"))
    assert excinfo.value.status == 503

    def network_handler(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError):
        _http_transport(network_handler).chat(_chat("p"))


def test_http_transport_custom_response_path():
    def handler(request):
        return httpx.Response(200, json={"output": {"text": "custom"}})

    transport = _http_transport(handler, response_path=("output", "text"))
    assert transport.chat(_chat("p")) == "custom"

    strict = _http_transport(handler, response_path=("missing", "field"))
    with pytest.raises(ProviderError, match="malformed provider response"):
        strict.chat(_chat("p"))


def test_http_transport_embed_and_rerank_shapes():
    def handler(request):
        payload = json.loads(request.content)
        if str(request.url).endswith("/embed"):
            data = [{"index": i, "embedding": [float(i), 1.0]}
                    for i in range(len(payload["input"]))]
            return httpx.Response(200, json={"data": list(reversed(data))})
        rows = [{"index": i, "relevance_score": 0.1 * i}
                for i in range(len(payload["documents"]))]
        return httpx.Response(200, json={"results": rows})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    transport = HttpTransport(endpoint="https://api.test/chat",
                              embed_endpoint="https://api.test/embed",
                              rerank_endpoint="https://api.test/rerank", client=client)
    assert transport.embed(EmbeddingRequest(model="m", inputs=("a", "b"))) == \
        [[0.0, 1.0], [1.0, 1.0]]
    assert transport.rerank(RerankRequest(model="m", query="q", candidates=("x", "y"))) == \
        pytest.approx([0.0, 0.1])


def test_http_transport_requires_optional_endpoints():
    transport = _http_transport(lambda request: httpx.Response(200, json={}))
    with pytest.raises(ProviderError, match="no embedding endpoint"):
        transport.embed(EmbeddingRequest(model="m", inputs=("a",)))
    with pytest.raises(ProviderError, match="no rerank endpoint"):
        transport.rerank(RerankRequest(model="m", query="q", candidates=("a",)))


def test_adapters_expose_model_tags(mock_client):
    embedder = Embedder(mock_client, "embed-tag")
    scorer = RerankScorer(mock_client, "rerank-tag")
    assert embedder.model == "embed-tag"
    assert scorer.model == "rerank-tag"
    assert len(embedder(["one text"])[0]) == 8
    assert len(scorer("query", ["candidate"])) == 1


def test_build_provider_kinds(monkeypatch):
    client = build_provider(ProviderSettings(kind="mock"), seed=5)
    assert isinstance(client, ProviderClient)
    with pytest.raises(ProviderError, match="requires provider.endpoint"):
        build_provider(ProviderSettings(kind="http"))
    with pytest.raises(ProviderError, match="unknown provider kind"):
        build_provider(ProviderSettings(kind="carrier-pigeon"))
    monkeypatch.setenv("CLAIMBENCH_API_KEY", "env-secret")
    http_client = build_provider(ProviderSettings(kind="http", endpoint="https://x/chat"))
    assert http_client._transport._api_key == "env-secret"
