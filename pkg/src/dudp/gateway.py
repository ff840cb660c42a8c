"""Gateway to external model services: chat completion and token embedding.

One abstraction serves distillation, evolution, judging, and embedding
similarity. Transports are pluggable: a live HTTP transport speaking the
common chat-completions REST convention, an offline echo mock, and a
record/replay pair that makes every gateway-dependent test hermetic.

Auth tokens are referenced by environment variable name and injected only
into request headers at send time; they never appear in requests,
transcripts, or logs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import httpx

from .records import canonical_json


class GatewayError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


class TransientGatewayError(GatewayError):
    """Retryable failure: timeout, connection error, or 5xx status."""


@dataclass(frozen=True)
class GatewayProfile:
    name: str = "default"
    kind: str = "echo"  # echo | http | replay | record
    endpoint: str = ""
    model: str = ""
    auth_env: str = ""  # env var NAME holding the token, never the token
    timeout_s: float = 30.0
    max_retries: int = 2
    max_in_flight: int = 4
    backoff_s: float = 0.5
    transcript_path: str = ""  # replay source / record sink
    embed_dim: int = 32  # echo/static embeddings
    inner: str = "http"  # wrapped transport for record mode
    static_response: str = ""  # fixed completion for the static mock

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")


@dataclass(frozen=True)
class Transcript:
    request_hash: str
    request: dict[str, Any]
    response: dict[str, Any]
    latency_s: float
    timestamp: str


def request_hash(request: dict[str, Any]) -> str:
    """Stable digest of the normalized request body."""
    return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()


class EchoTransport:
    """Offline mock: chat echoes the last user message; embeddings are
    deterministic per text."""

    def __init__(self, embed_dim: int = 32):
        self.embed_dim = embed_dim

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        if request["kind"] == "chat":
            content = ""
            for message in request["messages"]:
                if message["role"] == "user":
                    content = message["content"]
            return {"content": content}
        vectors = [self._vector(text) for text in request["input"]]
        return {"vectors": vectors}

    def _vector(self, text: str) -> list[float]:
        out: list[float] = []
        counter = 0
        while len(out) < self.embed_dim:
            digest = hashlib.sha256(f"{counter}\x00{text}".encode("utf-8")).digest()
            for i in range(0, len(digest) - 7, 8):
                raw = int.from_bytes(digest[i:i + 8], "big")
                out.append(raw / 2.0 ** 63 - 1.0)
                if len(out) == self.embed_dim:
                    break
            counter += 1
        return out


class StaticTransport:
    """Offline mock returning one fixed completion for every chat request."""

    def __init__(self, content: str, embed_dim: int = 32):
        self.content = content
        self._echo = EchoTransport(embed_dim=embed_dim)

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        if request["kind"] == "chat":
            return {"content": self.content}
        return self._echo.send(request)


class ScriptedTransport:
    """Test double driven by a list of responses or exceptions, in order."""

    def __init__(self, responses: list[Any]):
        self.responses = list(responses)
        self.requests: list[dict[str, Any]] = []

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        self.requests.append(request)
        if not self.responses:
            raise GatewayError("script_exhausted", "no scripted response left")
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        if isinstance(item, str):
            return {"content": item}
        return item


class FailingTransport:
    """Asserts hermeticity: any use is a test failure."""

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        raise AssertionError("network transport used in a hermetic context")


class HttpTransport:
    """Chat-completions REST convention over JSON bodies."""

    def __init__(self, profile: GatewayProfile):
        self.profile = profile

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.profile.auth_env:
            token = os.environ.get(self.profile.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        base = self.profile.endpoint.rstrip("/")
        try:
            if request["kind"] == "chat":
                body = {"model": request["model"], "messages": request["messages"],
                        **request.get("params", {})}
                resp = httpx.post(f"{base}/chat/completions", json=body,
                                  headers=self._headers(), timeout=self.profile.timeout_s)
            else:
                body = {"model": request["model"], "input": request["input"]}
                resp = httpx.post(f"{base}/embeddings", json=body,
                                  headers=self._headers(), timeout=self.profile.timeout_s)
        except httpx.TimeoutException as exc:
            raise TransientGatewayError("timeout", str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransientGatewayError("connection", str(exc)) from exc
        if resp.status_code >= 500:
            raise TransientGatewayError("http_status", f"status {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError("http_status", f"status {resp.status_code}: {resp.text[:200]}")
        payload = resp.json()
        if request["kind"] == "chat":
            return {"content": payload["choices"][0]["message"]["content"]}
        return {"vectors": [item["embedding"] for item in payload["data"]]}


class ReplayTransport:
    """Serves recorded responses by request hash; unseen requests fail."""

    def __init__(self, transcript_path: str):
        self.responses: dict[str, dict[str, Any]] = {}
        with open(transcript_path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self.responses[entry["request_hash"]] = entry["response"]

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        key = request_hash(request)
        if key not in self.responses:
            raise GatewayError("replay_miss", f"no recorded response for {key[:12]}")
        return self.responses[key]


class RecordingTransport:
    """Wraps another transport and appends every exchange to a JSONL file."""

    def __init__(self, inner, transcript_path: str):
        self.inner = inner
        self.transcript_path = transcript_path
        self._lock = threading.Lock()

    def send(self, request: dict[str, Any]) -> dict[str, Any]:
        started = time.monotonic()
        response = self.inner.send(request)
        latency = time.monotonic() - started
        entry = {"request_hash": request_hash(request), "request": request,
                 "response": response, "latency_s": round(latency, 6),
                 "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        with self._lock, open(self.transcript_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return response


def _build_transport(profile: GatewayProfile):
    if profile.kind == "echo":
        return EchoTransport(embed_dim=profile.embed_dim)
    if profile.kind == "static":
        return StaticTransport(profile.static_response, embed_dim=profile.embed_dim)
    if profile.kind == "http":
        return HttpTransport(profile)
    if profile.kind == "replay":
        return ReplayTransport(profile.transcript_path)
    if profile.kind == "record":
        inner_profile = dataclasses.replace(profile, kind=profile.inner)
        return RecordingTransport(_build_transport(inner_profile), profile.transcript_path)
    raise ValueError(f"unknown gateway kind {profile.kind!r}")


@dataclass
class ModelGateway:
    """Chat and embedding calls with retry, backoff, and bounded concurrency."""

    profile: GatewayProfile = field(default_factory=GatewayProfile)
    transport: Any = None
    _sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        if self.transport is None:
            self.transport = _build_transport(self.profile)
        self._semaphore = threading.BoundedSemaphore(self.profile.max_in_flight)

    def _send_with_retry(self, request: dict[str, Any]) -> dict[str, Any]:
        attempts = 1 + self.profile.max_retries
        last: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.profile.backoff_s * 2.0 ** (attempt - 1))
            try:
                with self._semaphore:
                    return self.transport.send(request)
            except TransientGatewayError as exc:
                last = exc
        raise GatewayError("retries_exhausted",
                           f"{attempts} attempts failed; last: {last}") from last

    def chat(self, messages: list[dict[str, str]],
             temperature: float = 0.0, max_tokens: int | None = None) -> str:
        params: dict[str, Any] = {"temperature": temperature}
        if max_tokens is not None:
            params["max_tokens"] = max_tokens
        request = {"kind": "chat", "model": self.profile.model,
                   "messages": messages, "params": params}
        response = self._send_with_retry(request)
        content = response.get("content", "")
        if not content:
            raise GatewayError("empty_completion", "gateway returned an empty completion")
        return content

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be nonempty")
        request = {"kind": "embed", "model": self.profile.model, "input": list(texts)}
        response = self._send_with_retry(request)
        vectors = response.get("vectors", [])
        if len(vectors) != len(texts):
            raise GatewayError("dimension_mismatch",
                               f"expected {len(texts)} vectors, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise GatewayError("dimension_mismatch", f"mixed vector dimensions {sorted(dims)}")
        return vectors


def profile_from_config(config: dict[str, Any], name: str) -> GatewayProfile:
    """Read gateways.<name> from a parsed config mapping."""
    gateways = config.get("gateways", {})
    if name not in gateways:
        raise KeyError(f"no gateway profile named {name!r} in config")
    entry = dict(gateways[name])
    entry.setdefault("name", name)
    return GatewayProfile(**entry)


def gateway_from_config(config: dict[str, Any], name: str) -> ModelGateway:
    return ModelGateway(profile=profile_from_config(config, name))
