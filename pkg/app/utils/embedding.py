"""Deterministic text embeddings and vector similarity."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Protocol, runtime_checkable

import numpy as np

from app.errors import DimensionMismatch, EmptyText, ZeroVector
from app.utils.text import normalize

DEFAULT_DIM = 256


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Anything that maps text to a unit-norm vector of fixed dimension."""

    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Feature-hash character trigrams of the normalized text into ``dim`` signed buckets.

    The hash is blake2b, so vectors are identical across processes and platforms.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self._cached = lru_cache(maxsize=65536)(self._embed_normalized)

    def embed(self, text: str) -> np.ndarray:
        normalized = normalize(text)
        if not normalized:
            raise EmptyText("cannot embed empty text")
        return self._cached(normalized)

    def _embed_normalized(self, normalized: str) -> np.ndarray:
        padded = f" {normalized} "
        vector = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            digest = hashlib.blake2b(padded[i : i + 3].encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vector[bucket] += sign
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise ZeroVector(f"hashed features cancel out for {normalized!r}")
        vector /= norm
        vector.setflags(write=False)
        return vector


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clipped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension {a.shape} != {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    value = float(np.dot(a, b)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


_default_embedders: dict[int, HashingEmbedder] = {}


def get_embedder(dim: int = DEFAULT_DIM) -> HashingEmbedder:
    """Shared hashing embedder per dimension."""
    embedder = _default_embedders.get(dim)
    if embedder is None:
        embedder = HashingEmbedder(dim)
        _default_embedders[dim] = embedder
    return embedder


def embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    return get_embedder(dim).embed(text)
