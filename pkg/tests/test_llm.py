from __future__ import annotations

import json

import httpx
import pytest

from evalserve.errors import LlmUnavailable, MalformedResponse, TranscriptExhausted
from evalserve.llm import ChatTurn, HttpChatClient, LlmConfig, ScriptedLlm

CONFIG = LlmConfig(base_url="http://llm.internal:8080", model_name="local-model")
HISTORY = [ChatTurn("user", "hello")]


def reply_body(content="YES"):
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


def make_client(handler, config=CONFIG):
    return HttpChatClient(config, transport=httpx.MockTransport(handler), sleep=lambda s: None)


class TestHttpChatClient:
    def test_returns_assistant_content(self):
        client = make_client(lambda req: httpx.Response(200, json=reply_body("fine work")))
        assert client.complete(HISTORY) == "fine work"

    def test_every_request_is_greedy(self):
        seen = {}

        def handler(request):
            seen.update(json.loads(request.content))
            return httpx.Response(200, json=reply_body())

        make_client(handler).complete(HISTORY)
        assert seen["temperature"] == 0
        assert seen["model"] == "local-model"
        assert seen["messages"] == [{"role": "user", "content": "hello"}]

    def test_requests_only_go_to_configured_host(self):
        hosts = []

        def handler(request):
            hosts.append((request.url.host, request.url.port, request.url.path))
            return httpx.Response(200, json=reply_body())

        make_client(handler).complete(HISTORY)
        assert hosts == [("llm.internal", 8080, "/v1/chat/completions")]

    def test_retries_transient_503_then_succeeds(self):
        statuses = iter([503, 503, 200])

        def handler(request):
            status = next(statuses)
            return httpx.Response(status, json=reply_body() if status == 200 else None)

        assert make_client(handler).complete(HISTORY) == "YES"

    def test_unavailable_after_retries(self):
        client = make_client(lambda req: httpx.Response(503))
        with pytest.raises(LlmUnavailable):
            client.complete(HISTORY)

    def test_transport_errors_retry_then_fail(self):
        def handler(request):
            raise httpx.ConnectError("refused")

        with pytest.raises(LlmUnavailable):
            make_client(handler).complete(HISTORY)

    def test_missing_content_is_malformed(self):
        client = make_client(lambda req: httpx.Response(200, json={"choices": [{}]}))
        with pytest.raises(MalformedResponse):
            client.complete(HISTORY)

    def test_bearer_token_from_environment(self, monkeypatch):
        monkeypatch.setenv("EVALSERVE_LLM_TOKEN", "sekrit-token")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json=reply_body())

        make_client(handler).complete(HISTORY)
        assert seen["auth"] == "Bearer sekrit-token"

    def test_no_auth_header_without_token(self, monkeypatch):
        monkeypatch.delenv("EVALSERVE_LLM_TOKEN", raising=False)
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json=reply_body())

        make_client(handler).complete(HISTORY)
        assert seen["auth"] is None

    def test_empty_history_rejected(self):
        client = make_client(lambda req: httpx.Response(200, json=reply_body()))
        with pytest.raises(ValueError):
            client.complete([])

    def test_timeout_must_be_positive(self):
        with pytest.raises(ValueError):
            LlmConfig(base_url="http://x", model_name="m", request_timeout=0)


class TestScriptedLlm:
    def test_replies_verbatim_in_order(self):
        stub = ScriptedLlm(["one\n", " two "])
        assert stub.complete(HISTORY) == "one\n"
        assert stub.complete(HISTORY + [ChatTurn("assistant", "one\n")]) == " two "

    def test_empty_transcript_raises(self):
        with pytest.raises(TranscriptExhausted):
            ScriptedLlm([]).complete(HISTORY)

    def test_surplus_detected(self):
        stub = ScriptedLlm(["a", "b"])
        stub.complete(HISTORY)
        with pytest.raises(TranscriptExhausted):
            stub.assert_consumed()

    def test_records_requests(self):
        stub = ScriptedLlm(["a"])
        stub.complete(HISTORY)
        assert stub.requests == [HISTORY]
