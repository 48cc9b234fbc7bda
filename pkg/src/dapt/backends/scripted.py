"""Deterministic backends for offline runs and tests.

A scripted chat backend maps substrings of the last user message to canned
replies; a scripted embedder maps exact texts to fixed vectors, optionally
falling back to a hash-seeded unit vector so unlisted texts still embed
deterministically. Both are pure functions of their request.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BackendError
from .http import normalize_vector
from .types import CallRecord, ChatRequest, EmbedRequest, UsageTracker


@dataclass(frozen=True)
class ChatRule:
    """Reply when every substring in `match` occurs in the last user message."""

    match: tuple[str, ...]
    reply: str

    def applies(self, message: str) -> bool:
        return all(part in message for part in self.match)


class ScriptedChat:
    def __init__(self, rules: list[ChatRule], default: str | None = None):
        self.rules = rules
        self.default = default
        self.usage = UsageTracker()
        self.calls: list[CallRecord] = []

    def complete(self, req: ChatRequest) -> str:
        message = req.last_user_message()
        self.calls.append(CallRecord("chat", req.tag, message[:120]))
        self.usage.add(req.tag)
        for rule in self.rules:
            if rule.applies(message):
                return rule.reply
        if self.default is not None:
            return self.default
        raise BackendError(f"no scripted reply matches message: {message[:200]!r}")

    @classmethod
    def from_spec(cls, spec: dict) -> "ScriptedChat":
        rules = []
        for raw in spec.get("rules", []):
            match = raw["match"]
            if isinstance(match, str):
                match = [match]
            rules.append(ChatRule(tuple(match), raw["reply"]))
        return cls(rules, default=spec.get("default"))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedChat":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_spec(doc.get("chat", doc))


def hash_unit_vector(text: str, dimension: int) -> list[float]:
    """Deterministic pseudo-random unit vector for a text."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")
    rng = np.random.RandomState(seed)
    vec = rng.standard_normal(dimension)
    return normalize_vector(vec.tolist())


class ScriptedEmbed:
    def __init__(self, table: dict[str, list[float]] | None = None, *,
                 dimension: int = 8, strict: bool = False):
        self.table = dict(table or {})
        self.dimension = dimension
        self.strict = strict
        self.usage = UsageTracker()
        self.calls: list[CallRecord] = []
        for text, vec in self.table.items():
            if len(vec) != dimension:
                raise ValueError(f"vector for {text!r} has dim {len(vec)}, expected {dimension}")

    def embed(self, req: EmbedRequest) -> list[list[float]]:
        self.calls.append(CallRecord("embed", "embed", f"{len(req.texts)} texts"))
        self.usage.add("embed")
        out = []
        for text in req.texts:
            if text in self.table:
                out.append(normalize_vector(self.table[text]))
            elif self.strict:
                raise BackendError(f"no scripted vector for text: {text[:200]!r}")
            else:
                out.append(hash_unit_vector(text, self.dimension))
        return out

    @classmethod
    def from_spec(cls, spec: dict) -> "ScriptedEmbed":
        return cls(spec.get("table", {}),
                   dimension=int(spec.get("dimension", 8)),
                   strict=bool(spec.get("strict", False)))

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedEmbed":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_spec(doc.get("embed", doc))


@dataclass
class ScriptedBackends:
    """Chat + embed pair loaded from one script file."""

    chat: ScriptedChat
    embed: ScriptedEmbed

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackends":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(chat=ScriptedChat.from_spec(doc.get("chat", {})),
                   embed=ScriptedEmbed.from_spec(doc.get("embed", {})))
