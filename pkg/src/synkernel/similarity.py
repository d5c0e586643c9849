"""Text similarity providers.

The retrieval layer only needs two operations: embed a text into a fixed-size
vector and score a pair of texts in [0, 1]. The default provider is a hashed
character-trigram model: cheap, deterministic, dependency-free, and good
enough to separate task families in the simulation worlds. Real deployments
can inject any provider satisfying the same protocol.
"""

from __future__ import annotations

import zlib
from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class SimilarityProvider(Protocol):
    """Contract for pluggable text similarity backends."""

    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def similarity(self, a: str, b: str) -> float: ...


class TrigramSimilarity:
    """Hashed character-trigram frequency vectors with cosine scoring.

    Trigrams are every 3-character sliding window of the raw text (texts
    shorter than 3 characters contribute themselves as a single token). Each
    trigram is hashed with crc32 into one of ``dim`` buckets; the bucket
    counts are L2-normalized. Cosine similarity is mapped from [-1, 1] into
    [0, 1] so downstream scoring can treat 0 as "unrelated" and 1 as
    "identical". Identical texts always score exactly 1.0.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim

    def _tokens(self, text: str):
        if len(text) < 3:
            return [text] if text else []
        return [text[i : i + 3] for i in range(len(text) - 2)]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in self._tokens(text):
            vec[zlib.crc32(tok.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec

    def similarity(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        # Zero-norm vectors (empty text) dot to 0, landing on the midpoint.
        cos = float(np.dot(self.embed(a), self.embed(b)))
        return float(np.clip((cos + 1.0) / 2.0, 0.0, 1.0))


def cosine_to_unit(cos: float) -> float:
    """Map a cosine in [-1, 1] to the [0, 1] similarity scale."""
    return float(np.clip((cos + 1.0) / 2.0, 0.0, 1.0))
