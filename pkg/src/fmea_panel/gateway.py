"""Chat-completion backend abstraction.

One completion contract with two providers: an HTTP client speaking the
OpenAI-compatible wire format (POST {base_url}/v1/chat/completions, bearer
token from LLM_API_KEY) and a deterministic mock used by every test profile.
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol

import requests

from fmea_panel.domain import ValidationError

RETRY_DELAYS = (0.5, 1.0, 2.0)
MAX_ATTEMPTS = 3
RETRIABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class GatewayError(Exception):
    """Base for completion transport failures."""


class BackendUnavailableError(GatewayError):
    """Retries exhausted against the backend."""

    def __init__(self, message: str, last_status: int | None = None):
        super().__init__(message)
        self.last_status = last_status


class RequestRejectedError(GatewayError):
    """Non-retriable 4xx; carries the response body."""

    def __init__(self, status: int, body: str):
        super().__init__(f"request rejected with HTTP {status}")
        self.status = status
        self.body = body


class ProtocolError(GatewayError):
    """Response did not match the expected wire shape."""


class MessageRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: MessageRole
    content: str

    def __post_init__(self):
        if self.role in (MessageRole.SYSTEM, MessageRole.USER) and not self.content:
            raise ValidationError(f"content: must be nonempty for {self.role.value} messages")


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    model_name: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 1024
    request_seed: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValidationError("messages: must be nonempty")
        if self.messages[0].role is not MessageRole.SYSTEM:
            raise ValidationError("messages: first message must have role=system")
        if self.temperature < 0:
            raise ValidationError("temperature: must be >= 0")
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens: must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    provider: str  # "http" | "mock"
    latency_ms: int
    raw_finish_reason: str


class Provider(Protocol):
    def complete(self, req: CompletionRequest) -> CompletionResult: ...


def request_to_wire(req: CompletionRequest) -> dict:
    wire = {
        "model": req.model_name,
        "messages": [{"role": m.role.value, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    if req.request_seed is not None:
        wire["seed"] = req.request_seed
    return wire


def request_from_wire(wire: dict) -> CompletionRequest:
    return CompletionRequest(
        messages=tuple(
            ChatMessage(role=MessageRole(m["role"]), content=m["content"])
            for m in wire["messages"]
        ),
        model_name=wire["model"],
        temperature=wire["temperature"],
        max_tokens=wire["max_tokens"],
        request_seed=wire.get("seed"),
    )


class HttpProvider:
    """OpenAI-compatible chat completions over HTTP with bounded retries.

    Transient failures (HTTP 429/5xx, connection errors, timeouts) are retried
    with backoff 0.5s, 1s, 2s plus optional jitter, at most three attempts.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        jitter: float = 0.0,
        sleeper: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        resolved = base_url or os.environ.get("LLM_BASE_URL")
        if not resolved:
            raise ValidationError("provider.base_url: required (or set LLM_BASE_URL)")
        self._url = resolved.rstrip("/") + "/v1/chat/completions"
        self._api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        self._timeout = timeout
        self._jitter = jitter
        self._sleep = sleeper
        self._session = session or requests.Session()

    def complete(self, req: CompletionRequest) -> CompletionResult:
        payload = request_to_wire(req)
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"

        last_status: int | None = None
        last_error = "unknown"
        started = time.monotonic()
        for attempt in range(MAX_ATTEMPTS):
            if attempt > 0:
                delay = RETRY_DELAYS[attempt - 1]
                if self._jitter:
                    delay += self._jitter * (2 * random.random() - 1.0)
                self._sleep(max(delay, 0.0))
            try:
                response = self._session.post(
                    self._url, json=payload, headers=headers, timeout=self._timeout
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_status, last_error = None, str(exc)
                continue
            if response.status_code in RETRIABLE_STATUSES:
                last_status, last_error = response.status_code, response.text[:500]
                continue
            if 400 <= response.status_code < 500:
                raise RequestRejectedError(response.status_code, response.text)
            return self._parse(response, started)
        raise BackendUnavailableError(
            f"backend unavailable after {MAX_ATTEMPTS} attempts: {last_error}",
            last_status=last_status,
        )

    def _parse(self, response: requests.Response, started: float) -> CompletionResult:
        try:
            data = response.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason", "")
        except (json.JSONDecodeError, requests.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc
        if not isinstance(text, str):
            raise ProtocolError("completion content is not a string")
        latency_ms = int((time.monotonic() - started) * 1000)
        return CompletionResult(text=text, provider="http", latency_ms=latency_ms, raw_finish_reason=finish)
