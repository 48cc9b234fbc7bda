"""Per-language corpus ingestion and flat cosine top-k retrieval.

A corpus is a UTF-8 JSONL file of {"id", "title", "text"} records, one file
per language (`<dataset>.<lang>.jsonl`). Document vectors are unit-normalized
at indexing time so cosine similarity is a dot product, and the built index is
persisted to an `.idx.npz` sidecar keyed on the corpus mtime and the embedder
identity.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedRecordError
from .backends.types import EmbedBackend, EmbedRequest

logger = logging.getLogger(__name__)

EMBED_BATCH = 64
SIDECAR_SUFFIX = ".idx.npz"


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    lang: str


@dataclass
class CorpusIndex:
    lang: str
    documents: list[Document]
    vectors: np.ndarray  # (n, d), rows unit-normalized
    dimension: int

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape[0] != len(self.documents):
            raise ValueError("vector count does not match document count")
        if len(self.documents):
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("index vectors must be unit-normalized")

    def __len__(self) -> int:
        return len(self.documents)


def embedder_id(embed: EmbedBackend) -> str:
    """Stable-enough identifier for sidecar invalidation."""
    identity = getattr(embed, "identity", None)
    if identity is not None:
        return identity.fingerprint()
    dim = getattr(embed, "dimension", "?")
    return f"{type(embed).__name__}:{dim}"


def _parse_corpus(path: Path, lang: str) -> list[Document]:
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise MalformedRecordError(line_no, "record is not an object")
            doc_id = rec.get("id")
            text = rec.get("text")
            if not isinstance(doc_id, str) or not doc_id:
                raise MalformedRecordError(line_no, "missing or empty 'id'")
            if not isinstance(text, str) or not text.strip():
                raise MalformedRecordError(line_no, "missing or blank 'text'")
            if doc_id in seen:
                raise MalformedRecordError(line_no, f"duplicate id {doc_id!r}")
            seen.add(doc_id)
            docs.append(Document(id=doc_id, title=str(rec.get("title", "")),
                                 text=text, lang=lang))
    return docs


def _embed_documents(docs: list[Document], embed: EmbedBackend) -> np.ndarray:
    vectors: list[list[float]] = []
    for start in range(0, len(docs), EMBED_BATCH):
        batch = tuple(d.text for d in docs[start:start + EMBED_BATCH])
        vectors.extend(embed.embed(EmbedRequest(batch)))
    arr = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("embedder returned a zero vector")
    return arr / norms


def sidecar_path(corpus_path: str | Path) -> Path:
    return Path(str(corpus_path) + SIDECAR_SUFFIX)


def _load_sidecar(path: Path, corpus_path: Path, lang: str,
                  embed: EmbedBackend) -> CorpusIndex | None:
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            vectors = np.asarray(data["vectors"], dtype=np.float64)
    except Exception as exc:
        logger.warning("ignoring unreadable index sidecar %s: %s", path, exc)
        return None
    fresh = (meta.get("corpus_mtime_ns") == corpus_path.stat().st_mtime_ns
             and meta.get("embedder") == embedder_id(embed)
             and meta.get("lang") == lang)
    if not fresh:
        return None
    docs = [Document(lang=lang, **d) for d in meta["documents"]]
    return CorpusIndex(lang=lang, documents=docs, vectors=vectors,
                       dimension=int(meta["dimension"]))


def _save_sidecar(path: Path, corpus_path: Path, index: CorpusIndex,
                  embed: EmbedBackend) -> None:
    meta = {
        "lang": index.lang,
        "dimension": index.dimension,
        "corpus_mtime_ns": corpus_path.stat().st_mtime_ns,
        "embedder": embedder_id(embed),
        "documents": [{"id": d.id, "title": d.title, "text": d.text}
                      for d in index.documents],
    }
    np.savez(path, vectors=index.vectors, meta=json.dumps(meta, ensure_ascii=False))


def build_index(corpus_path: str | Path, lang: str, embed: EmbedBackend, *,
                use_cache: bool = True) -> CorpusIndex:
    """Embed a corpus file into a searchable index, reusing a fresh sidecar."""
    corpus_path = Path(corpus_path)
    side = sidecar_path(corpus_path)
    if use_cache:
        cached = _load_sidecar(side, corpus_path, lang, embed)
        if cached is not None:
            logger.info("loaded cached index for %s (%d docs)", corpus_path, len(cached))
            return cached
    docs = _parse_corpus(corpus_path, lang)
    if docs:
        vectors = _embed_documents(docs, embed)
        dimension = vectors.shape[1]
    else:
        dimension = int(getattr(embed, "dimension", 0) or 0)
        vectors = np.zeros((0, dimension))
    index = CorpusIndex(lang=lang, documents=docs, vectors=vectors, dimension=dimension)
    if use_cache:
        _save_sidecar(side, corpus_path, index, embed)
    return index


def retrieve(index: CorpusIndex, query: str, k: int,
             embed: EmbedBackend) -> list[tuple[Document, float]]:
    """Top-k documents by cosine similarity, ties broken by smaller doc id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not index.documents:
        return []
    qvec = np.asarray(embed.embed(EmbedRequest((query,)))[0], dtype=np.float64)
    norm = np.linalg.norm(qvec)
    if norm > 0:
        qvec = qvec / norm
    scores = np.clip(index.vectors @ qvec, -1.0, 1.0)
    order = sorted(range(len(index.documents)),
                   key=lambda i: (-scores[i], index.documents[i].id))
    return [(index.documents[i], float(scores[i])) for i in order[:k]]
