"""Text encoders and similarity primitives.

Any object with an integer ``dim`` attribute and an ``encode(text)``
method returning a float64 vector of that length can stand in for the
default :class:`HashingEncoder` (e.g. an adapter around an embedding
service).
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .errors import DimensionError

DEFAULT_DIM = 256
DEFAULT_SEED = 0
MIN_DIM = 8


@runtime_checkable
class Encoder(Protocol):
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


@lru_cache(maxsize=1 << 18)
def _bucket(gram: str, dim: int, seed: int) -> tuple[int, float]:
    salt = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8, salt=salt).digest(), "little")
    return h % dim, (1.0 if (h >> 63) & 1 else -1.0)


def char_ngrams(text: str, n: int = 3) -> list[str]:
    """Overlapping character n-grams; strings shorter than n are one gram."""
    if not text:
        return []
    if len(text) < n:
        return [text]
    return [text[i : i + n] for i in range(len(text) - n + 1)]


def encode_hashing(text: str, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Signed feature hashing of lowercased character 3-grams, L2-normalized.

    Empty text maps to the zero vector.
    """
    if dim < MIN_DIM:
        raise DimensionError(f"dim must be >= {MIN_DIM}, got {dim}")
    vec = np.zeros(dim, dtype=np.float64)
    for gram in char_ngrams(text.lower()):
        idx, sign = _bucket(gram, dim, seed)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    # opposite signs can cancel a non-empty text down to zero as well
    if norm > 0:
        vec /= norm
    return vec


class HashingEncoder:
    """Deterministic, stateless encoder; safe to share between threads."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        if dim < MIN_DIM:
            raise DimensionError(f"dim must be >= {MIN_DIM}, got {dim}")
        self.dim = int(dim)
        self.seed = int(seed)

    def encode(self, text: str) -> np.ndarray:
        return encode_hashing(text, self.dim, self.seed)

    def encode_many(self, texts: Iterable[str]) -> np.ndarray:
        rows = [self.encode(t) for t in texts]
        if not rows:
            return np.zeros((0, self.dim))
        return np.vstack(rows)

    def __repr__(self):
        return f"HashingEncoder(dim={self.dim}, seed={self.seed})"


def encode_many(encoder: Encoder, texts: Iterable[str]) -> np.ndarray:
    """Stack encodings into an (n, dim) matrix for any encoder."""
    if hasattr(encoder, "encode_many"):
        return encoder.encode_many(texts)
    rows = [np.asarray(encoder.encode(t), dtype=np.float64) for t in texts]
    return np.vstack(rows) if rows else np.zeros((0, encoder.dim))


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    sim = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, sim))


def cosine_matrix(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between rows of two matrices."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if queries.shape[1] != keys.shape[1]:
        raise DimensionError(f"dimension mismatch: {queries.shape[1]} vs {keys.shape[1]}")
    qn = np.linalg.norm(queries, axis=1)
    kn = np.linalg.norm(keys, axis=1)
    denom = np.outer(qn, kn)
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where(denom > 0, (queries @ keys.T) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(sims, -1.0, 1.0)
