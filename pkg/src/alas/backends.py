"""Completion providers: an OpenAI-compatible HTTP client and a scripted fake."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Protocol, Union

import httpx

from .errors import AlasError, EnvironmentProblem

DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"


class BackendError(AlasError):
    retryable = False


class TransportError(BackendError):
    """Network failure, timeout, rate limit or server error. Safe to retry."""

    retryable = True


class ProtocolError(BackendError):
    """The server answered but the exchange is unusable (4xx, bad body)."""


class ScriptExhausted(BackendError):
    pass


class MissingApiKey(EnvironmentProblem):
    def __init__(self, env_var: str):
        self.env_var = env_var
        super().__init__(f"API key environment variable {env_var} is not set")


@dataclass(frozen=True)
class ModelSpec:
    model_tag: str
    context_window: int
    max_output: int

    def __post_init__(self) -> None:
        if not (self.context_window > self.max_output > 0):
            raise ValueError("ModelSpec needs context_window > max_output > 0")


def builtin_model_specs() -> list[ModelSpec]:
    # "16k" is taken as 16384; "128k" as the vendor-documented 128000.
    return [
        ModelSpec("gpt-3.5-turbo-16k", 16384, 4096),
        ModelSpec("gpt-4-1106-preview", 128000, 4096),
    ]


def model_spec_for(tag: str) -> ModelSpec:
    for spec in builtin_model_specs():
        if spec.model_tag == tag:
            return spec
    raise KeyError(f"unknown model tag {tag!r}")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 1.0
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a completion request needs at least one message")

    def to_payload(self, model: str) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            payload["max_tokens"] = self.max_tokens
        return payload


@dataclass(frozen=True)
class CompletionResult:
    text: str
    completion_tokens: int | None = None
    finish_reason: str | None = None


class Backend(Protocol):
    model_spec: ModelSpec

    def complete(self, request: CompletionRequest) -> CompletionResult: ...


def complete(backend: Backend, request: CompletionRequest) -> CompletionResult:
    return backend.complete(request)


ScriptItem = Union[str, CompletionResult, BaseException]


class ScriptedBackend:
    """Replays a fixed list of replies and records every request it receives.

    A script item may be a string, a :class:`CompletionResult`, or an exception
    instance, which is raised instead of replying.
    """

    def __init__(self, script: Iterable[ScriptItem], model_spec: ModelSpec | None = None):
        self._script = list(script)
        self._pos = 0
        self._lock = threading.Lock()
        self.model_spec = model_spec or ModelSpec("scripted", 16384, 4096)
        self.requests: list[CompletionRequest] = []

    @property
    def remaining(self) -> int:
        return len(self._script) - self._pos

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.requests.append(request)
            if self._pos >= len(self._script):
                raise ScriptExhausted(f"script exhausted after {len(self._script)} replies")
            item = self._script[self._pos]
            self._pos += 1
        if isinstance(item, BaseException):
            raise item
        if isinstance(item, CompletionResult):
            return item
        return CompletionResult(item, completion_tokens=None, finish_reason="stop")


class HttpBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    The API key is read from the environment variable ``api_key_env`` at
    construction time and never written anywhere.
    """

    def __init__(
        self,
        model_spec: ModelSpec,
        base_url: str = DEFAULT_BASE_URL,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        key = os.environ.get(api_key_env)
        if not key:
            raise MissingApiKey(api_key_env)
        self.model_spec = model_spec
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
        )

    def encode(self, request: CompletionRequest) -> bytes:
        return json.dumps(request.to_payload(self.model_spec.model_tag), ensure_ascii=False).encode("utf-8")

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body = self.encode(request)
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", content=body)
        except httpx.TimeoutException as exc:
            raise TransportError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc

        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"unexpected response body: {resp.text[:200]}") from exc
        if not isinstance(text, str):
            raise ProtocolError("message content is not text")
        usage = data.get("usage") or {}
        return CompletionResult(text, usage.get("completion_tokens"), choice.get("finish_reason"))

    def close(self) -> None:
        self._client.close()

