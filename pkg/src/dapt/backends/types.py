"""Request/response types shared by all chat and embedding backends."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from typing import Protocol, runtime_checkable


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" or "user"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call. `tag` labels the pipeline stage for accounting."""

    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 512
    tag: str = ""

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("chat request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def last_user_message(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        raise ValueError("no user message")  # unreachable, guarded above


def user_request(content: str, *, system: str | None = None, temperature: float = 0.0,
                 max_tokens: int = 512, tag: str = "") -> ChatRequest:
    msgs: list[ChatMessage] = []
    if system:
        msgs.append(ChatMessage("system", system))
    msgs.append(ChatMessage("user", content))
    return ChatRequest(tuple(msgs), temperature=temperature, max_tokens=max_tokens, tag=tag)


@dataclass(frozen=True)
class EmbedRequest:
    texts: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.texts:
            raise ValueError("embed request needs at least one text")
        if any(not t.strip() for t in self.texts):
            raise ValueError("embed request texts must be non-blank")


@dataclass(frozen=True)
class BackendIdentity:
    """Which model sits behind a backend; used for cache invalidation."""

    kind: str  # "chat" or "embed"
    model_name: str
    endpoint: str
    dimension: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "embed" and not self.dimension:
            raise ValueError("embed backends must declare a dimension")

    def fingerprint(self) -> str:
        return f"{self.kind}:{self.model_name}@{self.endpoint}"


@dataclass
class Usage:
    calls: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class UsageTracker:
    """Per-run token/call counters, keyed by stage tag. Thread-safe."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_tag: dict[str, Usage] = {}

    def add(self, tag: str, *, calls: int = 1, prompt_tokens: int = 0,
            completion_tokens: int = 0) -> None:
        with self._lock:
            u = self._by_tag.setdefault(tag or "untagged", Usage())
            u.calls += calls
            u.prompt_tokens += prompt_tokens
            u.completion_tokens += completion_tokens

    def snapshot(self) -> dict[str, Usage]:
        with self._lock:
            return {tag: Usage(u.calls, u.prompt_tokens, u.completion_tokens)
                    for tag, u in self._by_tag.items()}


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


@runtime_checkable
class EmbedBackend(Protocol):
    def embed(self, req: EmbedRequest) -> list[list[float]]: ...


@dataclass
class CallRecord:
    """One observed backend call, kept by test doubles for shape assertions."""

    kind: str
    tag: str
    summary: str


def canonical_chat_payload(req: ChatRequest) -> dict:
    return {
        "kind": "chat",
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "tag": req.tag,
    }


def canonical_embed_payload(req: EmbedRequest) -> dict:
    return {"kind": "embed", "texts": list(req.texts)}


def request_key(payload: dict) -> str:
    """Content hash of a full request; the replay-cache key."""
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
