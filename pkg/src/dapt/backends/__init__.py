"""Pluggable chat-completion and embedding clients."""

from .http import (
    HttpChatBackend,
    HttpEmbedBackend,
    chat_identity_from_env,
    embed_identity_from_env,
    normalize_vector,
)
from .replay import ReplayCache
from .scripted import ChatRule, ScriptedBackends, ScriptedChat, ScriptedEmbed, hash_unit_vector
from .types import (
    BackendIdentity,
    CallRecord,
    ChatBackend,
    ChatMessage,
    ChatRequest,
    EmbedBackend,
    EmbedRequest,
    Usage,
    UsageTracker,
    canonical_chat_payload,
    canonical_embed_payload,
    request_key,
    user_request,
)

__all__ = [
    "BackendIdentity",
    "CallRecord",
    "ChatBackend",
    "ChatMessage",
    "ChatRequest",
    "ChatRule",
    "EmbedBackend",
    "EmbedRequest",
    "HttpChatBackend",
    "HttpEmbedBackend",
    "ReplayCache",
    "ScriptedBackends",
    "ScriptedChat",
    "ScriptedEmbed",
    "Usage",
    "UsageTracker",
    "canonical_chat_payload",
    "canonical_embed_payload",
    "chat_identity_from_env",
    "embed_identity_from_env",
    "hash_unit_vector",
    "normalize_vector",
    "request_key",
    "user_request",
]
