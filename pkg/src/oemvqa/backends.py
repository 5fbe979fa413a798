"""Model endpoints behind one ``complete(prompt, media)`` call.

Live backends speak the OpenAI-style chat-completion wire shape over plain
HTTP; small adapters cover vendor deviations. Scripted backends replay
JSON-Lines fixtures keyed by request fingerprint and never touch the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Mapping

import httpx

from .errors import (
    AuthError,
    BackendError,
    BackendTimeoutError,
    ConfigError,
    ContextOverflowError,
    FixtureParseError,
    MissingFixtureError,
    TransientExhaustedError,
)

log = logging.getLogger(__name__)

Kind = Literal["multimodal", "text-only"]


def request_fingerprint(backend_name: str, prompt: str, media: str | None = None) -> str:
    """Stable replay key for one request."""
    h = hashlib.sha256()
    for part in (backend_name, prompt, media or ""):
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()[:32]


@dataclass(frozen=True)
class BackendIdentity:
    """Where a model lives and how to talk to it.

    Only the *name* of the credential variable is stored; the secret is read
    from the environment at request time.
    """

    name: str
    kind: Kind = "text-only"
    endpoint: str = ""
    model: str = ""
    auth_env_var: str | None = None
    max_context_chars: int = 1_000_000
    request_timeout_s: float = 120.0
    max_retries: int = 4
    temperature: float = 0.0
    adapter: str = "openai"
    min_interval_s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("multimodal", "text-only"):
            raise ConfigError(f"backend {self.name}: unknown kind {self.kind!r}")
        if self.max_context_chars <= 0:
            raise ConfigError(f"backend {self.name}: max_context_chars must be positive")


@dataclass(frozen=True)
class CompletionRecord:
    request_fingerprint: str
    raw_text: str
    latency_ms: float = 0.0
    usage: Mapping | None = field(default=None, compare=False)


class Backend:
    """Base class; subclasses implement :meth:`_complete`."""

    identity: BackendIdentity

    @property
    def name(self) -> str:
        return self.identity.name

    def complete(self, prompt: str, media: str | None = None) -> CompletionRecord:
        if self.identity.kind == "text-only" and media is not None:
            raise BackendError(f"backend {self.name} is text-only; got media")
        return self._complete(prompt, media)

    def _complete(self, prompt: str, media: str | None) -> CompletionRecord:
        raise NotImplementedError


def complete(backend: Backend, prompt: str, media: str | None = None) -> CompletionRecord:
    return backend.complete(prompt, media)


class ScriptedBackend(Backend):
    """Replays fixture responses keyed by :func:`request_fingerprint`."""

    def __init__(self, identity: BackendIdentity, responses: Mapping[str, str]):
        self.identity = identity
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path: str | os.PathLike, name: str,
                  kind: Kind = "text-only", **identity_kw) -> ScriptedBackend:
        return cls(BackendIdentity(name=name, kind=kind, **identity_kw),
                   load_fixture(path))

    def _complete(self, prompt, media):
        fp = request_fingerprint(self.name, prompt, media)
        try:
            text = self.responses[fp]
        except KeyError:
            raise MissingFixtureError(f"{self.name}: no fixture for request {fp}") from None
        return CompletionRecord(fp, text, 0.0)


def load_fixture(path: str | os.PathLike) -> dict[str, str]:
    """Parse a ``{"fp": ..., "text": ...}`` JSON-Lines fixture."""
    responses: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FixtureParseError(f"cannot read fixture {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            fp, text = record["fp"], record["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise FixtureParseError(f"{path}:{lineno}: {exc}") from exc
        if not isinstance(fp, str) or not isinstance(text, str):
            raise FixtureParseError(f"{path}:{lineno}: fp and text must be strings")
        if fp in responses:
            raise FixtureParseError(f"{path}:{lineno}: duplicate key {fp}")
        responses[fp] = text
    return responses


def write_fixture(path: str | os.PathLike, responses: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fp in sorted(responses):
            fh.write(json.dumps({"fp": fp, "text": responses[fp]}, ensure_ascii=False) + "\n")


def scripted_backend(fixture_path: str | os.PathLike, name: str = "scripted",
                     kind: Kind = "text-only", **identity_kw) -> ScriptedBackend:
    return ScriptedBackend.from_file(fixture_path, name, kind, **identity_kw)


class CallableBackend(Backend):
    """Offline backend that answers with ``fn(prompt, media)``."""

    def __init__(self, identity: BackendIdentity, fn: Callable[[str, str | None], str]):
        self.identity = identity
        self.fn = fn

    def _complete(self, prompt, media):
        fp = request_fingerprint(self.name, prompt, media)
        return CompletionRecord(fp, self.fn(prompt, media), 0.0)


# -- live HTTP --

def _media_part(media: str) -> dict:
    if "://" in media and not media.startswith("file://"):
        url = media
    else:
        path = Path(media.removeprefix("file://").split("#", 1)[0])
        mime = mimetypes.guess_type(path.name)[0] or "video/mp4"
        url = f"data:{mime};base64," + base64.b64encode(path.read_bytes()).decode()
    return {"type": "video_url", "video_url": {"url": url}}


def openai_request(identity: BackendIdentity, prompt: str, media: str | None) -> dict:
    if media is None:
        content = prompt
    else:
        content = [{"type": "text", "text": prompt}, _media_part(media)]
    return {
        "model": identity.model or identity.name,
        "messages": [{"role": "user", "content": content}],
        "temperature": identity.temperature,
    }


def openai_text(data: dict) -> str:
    message = data["choices"][0]["message"]
    return message.get("content") or ""


def reasoning_text(data: dict) -> str:
    """Keep a separately returned reasoning trace as a ``<think>`` block."""
    message = data["choices"][0]["message"]
    content = message.get("content") or ""
    thinking = message.get("reasoning_content") or message.get("reasoning")
    if thinking:
        return f"<think>\n{thinking}\n</think>\n{content}"
    return content


#: adapter name -> (request builder, response reader)
ADAPTERS = {
    "openai": (openai_request, openai_text),
    "reasoning": (openai_request, reasoning_text),
}

_OVERFLOW_HINTS = ("context length", "context_length", "maximum context", "too long")


class HttpBackend(Backend):
    """Chat-completion endpoint with retry, backoff and rate limiting."""

    def __init__(self, identity: BackendIdentity, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep, backoff_s: float = 1.0,
                 clock: Callable[[], float] = time.monotonic):
        if identity.adapter not in ADAPTERS:
            raise ConfigError(f"backend {identity.name}: unknown adapter {identity.adapter!r}")
        if not identity.endpoint:
            raise ConfigError(f"backend {identity.name}: endpoint is required")
        self.identity = identity
        self.client = client or httpx.Client()
        self.sleep = sleep
        self.clock = clock
        self.backoff_s = backoff_s
        self._rate_lock = threading.Lock()
        self._last_request = None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        var = self.identity.auth_env_var
        if var:
            secret = os.environ.get(var)
            if not secret:
                raise AuthError(f"backend {self.name}: environment variable {var} is not set")
            headers["Authorization"] = f"Bearer {secret}"
        return headers

    def _throttle(self):
        if self.identity.min_interval_s <= 0:
            return
        with self._rate_lock:
            now = self.clock()
            if self._last_request is not None:
                wait = self._last_request + self.identity.min_interval_s - now
                if wait > 0:
                    self.sleep(wait)
                    now += wait
            self._last_request = now

    def _complete(self, prompt, media):
        build, read = ADAPTERS[self.identity.adapter]
        payload = build(self.identity, prompt, media)
        fp = request_fingerprint(self.name, prompt, media)
        url = self.identity.endpoint.rstrip("/")
        if not url.endswith("/chat/completions"):
            url += "/chat/completions"
        last = "no attempt made"
        for attempt in range(self.identity.max_retries + 1):
            if attempt:
                delay = self.backoff_s * 2 ** (attempt - 1)
                log.info("%s: retry %d after %.1fs (%s)", self.name, attempt, delay, last)
                self.sleep(delay)
            self._throttle()
            started = time.perf_counter()
            try:
                resp = self.client.post(url, json=payload, headers=self._headers(),
                                        timeout=self.identity.request_timeout_s)
            except httpx.TimeoutException:
                last = "timeout"
                continue
            except httpx.TransportError as exc:
                last = f"transport error: {type(exc).__name__}"
                continue
            latency_ms = (time.perf_counter() - started) * 1000
            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"backend {self.name}: HTTP {status}")
            if status == 429 or status >= 500:
                last = f"HTTP {status}"
                continue
            if status == 413 or (status == 400 and any(
                    h in resp.text.lower() for h in _OVERFLOW_HINTS)):
                raise ContextOverflowError(f"backend {self.name}: prompt rejected as too long")
            if status >= 400:
                raise BackendError(f"backend {self.name}: HTTP {status}: {resp.text[:200]}")
            try:
                data = resp.json()
                text = read(data)
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"backend {self.name}: malformed response") from exc
            return CompletionRecord(fp, text, latency_ms, data.get("usage"))
        if last == "timeout":
            raise BackendTimeoutError(
                f"backend {self.name}: timed out after {self.identity.max_retries + 1} attempts")
        raise TransientExhaustedError(
            f"backend {self.name}: giving up after "
            f"{self.identity.max_retries + 1} attempts ({last})")


def build_backend(spec: Mapping, base_dir: str | os.PathLike = ".") -> Backend:
    """Construct a backend from a config-file table.

    ``type = "scripted"`` needs ``fixture``; ``type = "http"`` needs
    ``endpoint``. Remaining keys map onto :class:`BackendIdentity`.
    """
    spec = dict(spec)
    kind_of = spec.pop("type", "http")
    fixture = spec.pop("fixture", None)
    try:
        identity = BackendIdentity(**spec)
    except TypeError as exc:
        raise ConfigError(f"backend {spec.get('name')}: {exc}") from exc
    if kind_of == "scripted":
        if not fixture:
            raise ConfigError(f"backend {identity.name}: scripted backend needs a fixture")
        return ScriptedBackend(identity, load_fixture(Path(base_dir) / fixture))
    if kind_of == "http":
        return HttpBackend(identity)
    raise ConfigError(f"backend {identity.name}: unknown type {kind_of!r}")
