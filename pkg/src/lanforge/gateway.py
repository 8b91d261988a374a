"""Uniform access to text-completion backends.

Three interchangeable backends: a remote HTTP provider, a deterministic
scripted oracle for tests, and a record/replay layer that captures real
exchanges into a transcript and serves them back with prompt-fingerprint
verification.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field

import httpx

logger = logging.getLogger(__name__)

ENV_URL = "LANFORGE_LLM_URL"
ENV_KEY = "LANFORGE_LLM_KEY"
ENV_MODEL = "LANFORGE_LLM_MODEL"

BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP = 60.0


class GatewayError(Exception):
    pass


class ConfigError(GatewayError):
    """No backend is configured (missing environment variables)."""


class AbortedError(GatewayError):
    """The session cancelled an in-flight or retrying call."""


class OracleExhaustedError(GatewayError):
    """A scripted backend ran out of queued replies."""


class PromptTooLongError(GatewayError):
    """Prompt exceeded the configured length limit with overflow='error'."""


class ReplayMismatchError(GatewayError):
    """Replay got a request whose prompt differs from the recorded one.

    ``index`` is the 1-based position of the first diverging request.
    """

    def __init__(self, index: int, diff: str):
        self.index = index
        self.diff = diff
        super().__init__(f"replay mismatch at request {index}:\n{diff}")


@dataclass
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 2048
    tag: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass
class CompletionResponse:
    text: str
    latency: float = 0.0
    backend_id: str = ""


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass
class Exchange:
    prompt: str
    response: str
    tag: str = ""

    @property
    def prompt_sha256(self) -> str:
        return prompt_fingerprint(self.prompt)


@dataclass
class Transcript:
    """An ordered log of gateway exchanges, one JSON object per line on disk."""

    exchanges: list[Exchange] = field(default_factory=list)

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for exchange in self.exchanges:
            digest.update(exchange.prompt_sha256.encode("ascii"))
        return digest.hexdigest()

    def to_jsonl(self) -> str:
        lines = []
        for exchange in self.exchanges:
            lines.append(
                json.dumps(
                    {
                        "prompt_sha256": exchange.prompt_sha256,
                        "prompt": exchange.prompt,
                        "response": exchange.response,
                        "tag": exchange.tag,
                    },
                    ensure_ascii=False,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        exchanges = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GatewayError(f"transcript line {lineno}: invalid JSON: {exc.msg}")
            exchange = Exchange(
                prompt=doc["prompt"], response=doc["response"], tag=doc.get("tag", "")
            )
            recorded = doc.get("prompt_sha256")
            if recorded and recorded != exchange.prompt_sha256:
                raise GatewayError(
                    f"transcript line {lineno}: prompt_sha256 does not match prompt"
                )
            exchanges.append(exchange)
        return cls(exchanges)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "Transcript":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_jsonl(handle.read())


class CancelToken:
    """Cooperative cancellation shared between a session and its LLM calls."""

    def __init__(self):
        self._event = threading.Event()

    def cancel(self) -> None:
        self._event.set()

    @property
    def cancelled(self) -> bool:
        return self._event.is_set()

    def wait(self, timeout: float) -> bool:
        return self._event.wait(timeout)


class Backend:
    """Interface: ``complete(request) -> CompletionResponse``."""

    backend_id = "backend"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Serves a fixed queue of replies; fully deterministic."""

    backend_id = "scripted"

    def __init__(self, replies: list[str]):
        self._replies = list(replies)
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    @property
    def remaining(self) -> int:
        return len(self._replies)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls.append(request)
            if not self._replies:
                raise OracleExhaustedError(
                    f"scripted backend out of replies (tag={request.tag!r})"
                )
            text = self._replies.pop(0)
        return CompletionResponse(text=text, latency=0.0, backend_id=self.backend_id)


class HttpBackend(Backend):
    """Chat/completions-style HTTP provider.

    Transient transport failures (connection errors, timeouts, 429 and 5xx
    responses) are retried with exponential backoff, base 1s, factor 2,
    capped at 60s, with no attempt limit; a cancel token aborts the loop.
    """

    backend_id = "http"

    def __init__(
        self,
        url: str,
        key: str = "",
        model: str = "",
        *,
        cancel: CancelToken | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 120.0,
        max_prompt_chars: int | None = None,
        on_overflow: str = "error",  # "error" | "truncate"
    ):
        if not url:
            raise ConfigError("backend URL must be non-empty")
        self.url = url
        self.key = key
        self.model = model
        self.cancel = cancel or CancelToken()
        self.max_prompt_chars = max_prompt_chars
        self.on_overflow = on_overflow
        self._client = httpx.Client(transport=transport, timeout=timeout)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpBackend":
        url = os.environ.get(ENV_URL, "")
        if not url:
            raise ConfigError(
                f"no backend configured: set {ENV_URL} (and optionally "
                f"{ENV_KEY}, {ENV_MODEL})"
            )
        return cls(
            url,
            key=os.environ.get(ENV_KEY, ""),
            model=os.environ.get(ENV_MODEL, ""),
            **kwargs,
        )

    def _apply_prompt_limit(self, prompt: str) -> str:
        limit = self.max_prompt_chars
        if limit is None or len(prompt) <= limit:
            return prompt
        if self.on_overflow == "truncate":
            logger.warning("prompt truncated from %d to %d chars", len(prompt), limit)
            return prompt[:limit]
        raise PromptTooLongError(
            f"prompt is {len(prompt)} chars, limit is {limit}"
        )

    def _pause(self, delay: float) -> None:
        if self.cancel.wait(delay):
            raise AbortedError("cancelled while waiting to retry")

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        prompt = self._apply_prompt_limit(request.prompt)
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        attempt = 0
        started = time.monotonic()
        while True:
            if self.cancel.cancelled:
                raise AbortedError("cancelled before request")
            try:
                response = self._client.post(self.url, json=body, headers=headers)
                if response.status_code == 429 or response.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"transient status {response.status_code}",
                        request=response.request,
                        response=response,
                    )
                response.raise_for_status()
                payload = response.json()
                text = payload["choices"][0]["message"]["content"]
                return CompletionResponse(
                    text=text,
                    latency=time.monotonic() - started,
                    backend_id=self.backend_id,
                )
            except httpx.HTTPStatusError as exc:
                status = exc.response.status_code
                if status != 429 and status < 500:
                    raise GatewayError(f"provider rejected request: {status}") from exc
                failure = f"status {status}"
            except (httpx.TransportError, KeyError, json.JSONDecodeError) as exc:
                failure = repr(exc)
            delay = min(BACKOFF_BASE * (BACKOFF_FACTOR**attempt), BACKOFF_CAP)
            logger.warning(
                "transient backend failure (%s), retrying in %.0fs", failure, delay
            )
            self._pause(delay)
            attempt += 1


class RecordingBackend(Backend):
    """Wraps any backend and appends every exchange to a transcript."""

    backend_id = "recording"

    def __init__(self, inner: Backend, transcript: Transcript | None = None):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner.complete(request)
        with self._lock:
            self.transcript.exchanges.append(
                Exchange(prompt=request.prompt, response=response.text, tag=request.tag)
            )
        return response


class ReplayBackend(Backend):
    """Serves recorded responses in order, verifying prompt fingerprints.

    Never contacts the network; any divergence from the recorded prompt
    sequence fails loudly with the 1-based index of the first mismatch.
    """

    backend_id = "replay"

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self._position = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            index = self._position
            self._position += 1
        if index >= len(self.transcript.exchanges):
            raise ReplayMismatchError(
                index + 1, "no recorded exchange left for this request"
            )
        recorded = self.transcript.exchanges[index]
        if prompt_fingerprint(request.prompt) != recorded.prompt_sha256:
            diff = "\n".join(
                difflib.unified_diff(
                    recorded.prompt.splitlines(),
                    request.prompt.splitlines(),
                    fromfile="recorded",
                    tofile="request",
                    lineterm="",
                )
            )
            raise ReplayMismatchError(index + 1, diff)
        return CompletionResponse(
            text=recorded.response, latency=0.0, backend_id=self.backend_id
        )


def backend_from_env(cancel: CancelToken | None = None) -> Backend:
    """The remote backend named by the LANFORGE_LLM_* environment variables."""
    return HttpBackend.from_env(cancel=cancel)
