"""Embedding backends for memory retrieval and evidence coverage.

Two implementations: a deterministic hashed bag-of-tokens embedder for tests
and replay runs, and a remote embedder speaking an embeddings HTTP endpoint.
Both produce unit-length vectors; callers key caches by ``backend_id``.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

UNIT_NORM_TOL = 1e-6

_TOKEN = re.compile(r"[a-z0-9_]+")


class EmbeddingError(Exception):
    """Remote embedding failure after bounded retries."""


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - cosine_similarity(a, b)


class HashEmbedder:
    """Hashed bag-of-tokens, L2-normalized. Deterministic across runs and hosts."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.backend_id = f"hash-bow-{dim}"

    def _token_index(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        counts = np.zeros(self.dim, dtype=np.float64)
        tokens = _TOKEN.findall(text.lower())
        if not tokens:
            # no word tokens: fall back to hashing the raw text
            counts[self._token_index(text)] = 1.0
        for token in tokens:
            counts[self._token_index(token)] += 1.0
        return counts / np.linalg.norm(counts)


class RemoteEmbedder:
    """Embeddings endpoint client (POST {base_url}/embeddings)."""

    def __init__(self, base_url: str, api_key: str, model: str, max_retries: int = 3):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.max_retries = max_retries
        self.backend_id = f"remote-{model}"

    def embed(self, text: str) -> np.ndarray:
        import httpx

        if not text:
            raise ValueError("cannot embed empty text")
        last_error: Exception | None = None
        for _ in range(self.max_retries):
            try:
                response = httpx.post(
                    f"{self.base_url}/embeddings",
                    json={"model": self.model, "input": [text]},
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=60.0,
                )
                response.raise_for_status()
                vector = np.asarray(response.json()["data"][0]["embedding"], dtype=np.float64)
                return vector / np.linalg.norm(vector)
            except Exception as exc:  # noqa: BLE001 - any transport/shape failure retries
                last_error = exc
        raise EmbeddingError(f"embedding failed after {self.max_retries} retries: {last_error}")


class CachingEmbedder:
    """Wraps a backend with an in-process cache keyed by (backend id, text hash)."""

    def __init__(self, inner):
        self.inner = inner
        self.backend_id = inner.backend_id
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        key = (self.backend_id, hashlib.sha256(text.encode("utf-8")).hexdigest())
        hit = self._cache.get(key)
        if hit is None:
            hit = self.inner.embed(text)
            self._cache[key] = hit
        return hit
