"""Sentence embeddings and cosine ranking of demonstration candidates.

The reference backend is a deterministic hashed bag-of-words: stable
hashing (keyed blake2b), 512 dimensions, L2-normalized.  External
sentence-embedding services plug in behind the same interface.
"""

from __future__ import annotations

import hashlib
import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, Sentence

logger = logging.getLogger(__name__)


class EmbeddingBackend(ABC):
    """Maps text to a fixed-dimension vector; deterministic within a session."""

    name: str
    dim: int

    @abstractmethod
    def embed(self, text: str) -> np.ndarray:
        ...


class HashedBowBackend(EmbeddingBackend):
    """Hashed bag-of-words over lowercased whitespace tokens.

    Token counts are scattered into ``dim`` buckets by a keyed hash and the
    result is L2-normalized, so scaling the text ("x x" vs "x") preserves
    direction.
    """

    def __init__(self, dim: int = 512, hash_seed: int = 13):
        self.name = f"hashed-bow-{dim}"
        self.dim = dim
        self._key = hash_seed.to_bytes(8, "little")

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key)
        return int.from_bytes(digest.digest(), "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in text.lower().split():
            vec[self._bucket(token)] += 1.0
        return vec / np.linalg.norm(vec)


class ExternalEmbeddingBackend(EmbeddingBackend):
    """Placeholder for a remote embedding service (configured, never called
    in the test suite)."""

    def __init__(self, endpoint: str, dim: int = 1024):
        if not endpoint:
            raise ValueError("external embedding backend requires an endpoint")
        self.name = f"external:{endpoint}"
        self.endpoint = endpoint
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        from .backends import BackendUnavailableError

        raise BackendUnavailableError(
            f"external embedding backend {self.endpoint!r} is not reachable from this build"
        )


class CachedEmbeddingBackend(EmbeddingBackend):
    """Wraps a backend with a text-hash keyed cache, persistable as JSONL."""

    def __init__(self, inner: EmbeddingBackend):
        self.inner = inner
        self.name = inner.name
        self.dim = inner.dim
        self._cache: dict[str, np.ndarray] = {}

    @staticmethod
    def _key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, text: str) -> np.ndarray:
        key = self._key(text)
        if key not in self._cache:
            self._cache[key] = self.inner.embed(text)
        return self._cache[key]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as f:
            for key, vec in sorted(self._cache.items()):
                f.write(json.dumps({"text_hash": key, "vector": vec.tolist()}))
                f.write("\n")

    def load(self, path: str | Path) -> None:
        with Path(path).open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    self._cache[rec["text_hash"]] = np.asarray(rec["vector"], dtype=np.float64)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity a.b/(|a||b|); zero vectors are the caller's bug."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def document_key_similarity(
    target_vec: np.ndarray, doc: Document, backend: EmbeddingBackend
) -> float:
    """Similarity of a document to the target: max over its sentences.

    The demonstration shown in a prompt is the whole paragraph, so a
    document is as close as its closest sentence.
    """
    return max(cosine(target_vec, backend.embed(s.text)) for s in doc.sentences)


def rank_demonstrations(
    target: Sentence, pool: Corpus, k: int, backend: EmbeddingBackend,
    exclude_doc_id: str | None = None,
) -> list[Document]:
    """Top-k pool documents by descending cosine to the target sentence.

    Ties break lexicographically by doc_id.  k larger than the pool returns
    the whole pool and logs the truncation.  exclude_doc_id drops one
    document from the pool, so a training query never retrieves itself.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k == 0:
        return []
    candidates = [d for d in pool.documents if d.doc_id != exclude_doc_id]
    if not candidates:
        raise ValueError("cannot rank demonstrations from an empty pool")
    target_vec = backend.embed(target.text)
    scored = [
        (document_key_similarity(target_vec, doc, backend), doc) for doc in candidates
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].doc_id))
    if k > len(scored):
        logger.warning(
            "requested %d demonstrations but the pool has only %d documents", k, len(scored)
        )
    return [doc for _, doc in scored[:k]]
