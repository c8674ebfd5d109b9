"""Chat-completion client plus a deterministic scripted stub for tests.

The HTTP client targets any endpoint that speaks the common
``/v1/chat/completions`` wire format. Decoding is pinned to greedy
(temperature 0) and is deliberately not configurable: reproducible grading
depends on it.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .errors import LlmUnavailable, MalformedResponse, TranscriptExhausted

TOKEN_ENV_VAR = "EVALSERVE_LLM_TOKEN"
COMPLETIONS_PATH = "/v1/chat/completions"


@dataclass(frozen=True)
class ChatTurn:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class LlmConfig:
    base_url: str
    model_name: str
    request_timeout: float = 300.0
    max_retries: int = 3

    def __post_init__(self):
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")


class ChatClient(Protocol):
    def complete(self, history: Sequence[ChatTurn]) -> str: ...


class HttpChatClient:
    """Stateless per-request client; safe to share between grading workers.

    Transient transport failures and 5xx/429 responses are retried with
    exponential backoff up to ``max_retries``; anything still failing raises
    ``LlmUnavailable``. A 2xx body without a message content field raises
    ``MalformedResponse``.
    """

    def __init__(
        self,
        config: LlmConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.request_timeout,
            headers=headers,
            transport=transport,
        )

    def complete(self, history: Sequence[ChatTurn]) -> str:
        if not history:
            raise ValueError("history must be non-empty")
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": t.role, "content": t.content} for t in history],
            "temperature": 0,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = self._client.post(COMPLETIONS_PATH, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = LlmUnavailable(f"endpoint returned HTTP {response.status_code}")
                continue
            if response.status_code >= 400:
                raise LlmUnavailable(f"endpoint rejected request: HTTP {response.status_code}")
            return self._extract_content(response)
        raise LlmUnavailable(f"giving up after {self.config.max_retries} retries: {last_error}")

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponse(f"no message content in response: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("message content is not a string")
        return content

    def close(self) -> None:
        self._client.close()


class ScriptedLlm:
    """Replays a fixed transcript, verbatim and in order.

    Calling it more often than scripted raises ``TranscriptExhausted``, and
    ``assert_consumed`` flags unused replies — both catch prompt-sequence
    regressions. ``delay`` adds artificial latency once per conversation
    (a conversation restarts whenever the cumulative history resets), which
    models per-grading inference time.
    """

    def __init__(self, transcript: Sequence[str], delay: float = 0.0):
        self.transcript = list(transcript)
        self.delay = delay
        self.calls = 0
        self.requests: list[list[ChatTurn]] = []
        self._last_history_len = 0

    def complete(self, history: Sequence[ChatTurn]) -> str:
        new_conversation = self.calls == 0 or len(history) <= self._last_history_len
        if self.delay and new_conversation:
            time.sleep(self.delay)
        self._last_history_len = len(history)
        self.requests.append(list(history))
        if self.calls >= len(self.transcript):
            raise TranscriptExhausted(
                f"scripted transcript has {len(self.transcript)} replies, call {self.calls + 1} requested"
            )
        reply = self.transcript[self.calls]
        self.calls += 1
        return reply

    @property
    def remaining(self) -> int:
        return len(self.transcript) - self.calls

    def assert_consumed(self) -> None:
        if self.remaining:
            raise TranscriptExhausted(f"{self.remaining} scripted replies were never requested")
