"""OpenAI-compatible chat and embedding clients.

One wire protocol covers both the generation model and a locally served
embedding model. Credentials come from environment variables only:

    DAPT_CHAT_URL, DAPT_CHAT_MODEL, DAPT_CHAT_KEY
    DAPT_EMBED_URL, DAPT_EMBED_MODEL, DAPT_EMBED_KEY

Transient failures (HTTP 429/5xx and connection errors) are retried with
exponential backoff, up to 3 attempts total.
"""

from __future__ import annotations

import logging
import os
import threading
import time

import httpx
import numpy as np

from ..errors import (
    AuthError,
    DimensionMismatchError,
    EmptyResponseError,
    RateLimitExhaustedError,
    TransportError,
)
from .types import BackendIdentity, ChatRequest, EmbedRequest, UsageTracker

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_MAX_INFLIGHT = 8


def chat_identity_from_env() -> BackendIdentity:
    url = os.environ.get("DAPT_CHAT_URL", "")
    model = os.environ.get("DAPT_CHAT_MODEL", "")
    if not url or not model:
        raise AuthError("DAPT_CHAT_URL and DAPT_CHAT_MODEL must be set")
    return BackendIdentity(kind="chat", model_name=model, endpoint=url)


def embed_identity_from_env(dimension: int | None = None) -> BackendIdentity:
    url = os.environ.get("DAPT_EMBED_URL", "")
    model = os.environ.get("DAPT_EMBED_MODEL", "")
    if not url or not model:
        raise AuthError("DAPT_EMBED_URL and DAPT_EMBED_MODEL must be set")
    dim = dimension or int(os.environ.get("DAPT_EMBED_DIM", "1024"))
    return BackendIdentity(kind="embed", model_name=model, endpoint=url, dimension=dim)


class _HttpBase:
    def __init__(self, identity: BackendIdentity, api_key_env: str, *,
                 transport: httpx.BaseTransport | None = None,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                 backoff_base: float = 0.5,
                 max_inflight: int = DEFAULT_MAX_INFLIGHT,
                 timeout: float = 60.0):
        self.identity = identity
        self._api_key = os.environ.get(api_key_env, "")
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._inflight = threading.Semaphore(max_inflight)
        self.usage = UsageTracker()
        self.total_retries = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.identity.endpoint.rstrip("/") + path
        last_status: int | None = None
        last_exc: Exception | None = None
        for attempt in range(1, self._max_attempts + 1):
            if attempt > 1:
                self.total_retries += 1
                time.sleep(self._backoff_base * (2 ** (attempt - 2)))
            try:
                with self._inflight:
                    resp = self._client.post(url, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last_exc = exc
                last_status = None
                logger.warning("request to %s failed (%s), attempt %d/%d",
                               url, exc, attempt, self._max_attempts)
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication rejected by {url} ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_status = resp.status_code
                logger.warning("transient %d from %s, attempt %d/%d",
                               resp.status_code, url, attempt, self._max_attempts)
                continue
            if resp.status_code != 200:
                raise TransportError(f"unexpected status {resp.status_code} from {url}")
            return resp.json()
        if last_status == 429:
            raise RateLimitExhaustedError(f"rate limited after {self._max_attempts} attempts: {url}")
        raise TransportError(
            f"request failed after {self._max_attempts} attempts: {url} "
            f"(last: {last_status or last_exc})"
        )

    def close(self) -> None:
        self._client.close()


class HttpChatBackend(_HttpBase):
    """Chat-completion client for any OpenAI-compatible endpoint."""

    def __init__(self, identity: BackendIdentity | None = None, **kwargs):
        super().__init__(identity or chat_identity_from_env(), "DAPT_CHAT_KEY", **kwargs)

    def complete(self, req: ChatRequest) -> str:
        payload = {
            "model": self.identity.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        body = self._post("/chat/completions", payload)
        usage = body.get("usage") or {}
        self.usage.add(req.tag,
                       prompt_tokens=int(usage.get("prompt_tokens", 0)),
                       completion_tokens=int(usage.get("completion_tokens", 0)))
        choices = body.get("choices") or []
        if not choices:
            raise EmptyResponseError("endpoint returned no choices")
        content = (choices[0].get("message") or {}).get("content")
        if content is None:
            raise EmptyResponseError("endpoint returned a choice without content")
        return content


class HttpEmbedBackend(_HttpBase):
    """Embedding client; vectors are L2-normalized before they leave the client."""

    def __init__(self, identity: BackendIdentity | None = None, **kwargs):
        super().__init__(identity or embed_identity_from_env(), "DAPT_EMBED_KEY", **kwargs)

    def embed(self, req: EmbedRequest) -> list[list[float]]:
        payload = {"model": self.identity.model_name, "input": list(req.texts)}
        body = self._post("/embeddings", payload)
        data = body.get("data") or []
        if len(data) != len(req.texts):
            raise EmptyResponseError(
                f"endpoint returned {len(data)} embeddings for {len(req.texts)} inputs")
        data = sorted(data, key=lambda item: item.get("index", 0))
        vectors = [item.get("embedding") or [] for item in data]
        dim = len(vectors[0])
        for vec in vectors:
            if len(vec) != dim:
                raise DimensionMismatchError(dim, len(vec))
        self.usage.add("embed", calls=1)
        return [normalize_vector(v) for v in vectors]


def normalize_vector(vec: list[float]) -> list[float]:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise EmptyResponseError("embedding endpoint returned a zero vector")
    return (arr / norm).tolist()
