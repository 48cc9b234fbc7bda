"""Record/replay cache around chat and embedding backends.

The cache keys on a content hash of the full request. In record mode a miss
passes through to the wrapped backend and the response is appended to a JSONL
log; in replay mode a miss is a hard error, which guarantees a replayed run
never touches the network.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..errors import CacheMissError
from .types import (
    ChatBackend,
    ChatRequest,
    EmbedBackend,
    EmbedRequest,
    canonical_chat_payload,
    canonical_embed_payload,
    request_key,
)


class ReplayCache:
    """Wraps a chat and/or embed backend behind one append-only JSONL log."""

    def __init__(self, path: str | Path, mode: str = "record", *,
                 chat: ChatBackend | None = None,
                 embed: EmbedBackend | None = None):
        if mode not in ("record", "replay"):
            raise ValueError(f"mode must be 'record' or 'replay', got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._chat = chat
        self._embed = embed
        self._lock = threading.Lock()
        self._entries: dict[str, object] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = record["response"]

    def _lookup(self, payload: dict, call):
        key = request_key(payload)
        with self._lock:
            if key in self._entries:
                return self._entries[key]
        if self.mode == "replay":
            raise CacheMissError(key)
        if call is None:
            raise CacheMissError(key)
        response = call()
        with self._lock:
            self._entries[key] = response
            record = {"key": key, "request": payload, "response": response}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        return response

    def complete(self, req: ChatRequest) -> str:
        inner = self._chat
        call = (lambda: inner.complete(req)) if inner is not None else None
        return self._lookup(canonical_chat_payload(req), call)

    def embed(self, req: EmbedRequest) -> list[list[float]]:
        inner = self._embed
        call = (lambda: inner.embed(req)) if inner is not None else None
        return self._lookup(canonical_embed_payload(req), call)
