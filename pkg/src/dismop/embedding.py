"""Deterministic signed feature-hashing text embedder and vector similarity.

The embedder is training-free and platform-independent: token n-grams are
hashed with FNV-1a-64 over the config seed bytes followed by the n-gram
bytes, each hash contributes +/-1 to one bucket, and the bucket vector is
L2-normalized.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class EmbeddingError(Exception):
    pass


class EmptyText(EmbeddingError):
    """Text produced no tokens after normalization."""


class ZeroNorm(EmbeddingError):
    """Vector has zero L2 norm where a direction is required."""


class DimMismatch(EmbeddingError):
    """Operands have incompatible dimensions."""


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = 64
    seed: int = 0
    ngram_max: int = 1

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.ngram_max < 1:
            raise ValueError(f"ngram_max must be >= 1, got {self.ngram_max}")

    def to_json_dict(self) -> dict:
        return {"dim": self.dim, "seed": self.seed, "ngram_max": self.ngram_max}

    @classmethod
    def from_json_dict(cls, d: dict) -> "EmbedderConfig":
        return cls(dim=int(d["dim"]), seed=int(d["seed"]), ngram_max=int(d.get("ngram_max", 1)))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_ngram(cfg: EmbedderConfig, gram: str) -> tuple[int, float]:
    """Bucket index and sign for one n-gram under the config's seed."""
    h = fnv1a64(cfg.seed.to_bytes(8, "big") + gram.encode("utf-8"))
    sign = 1.0 if (h >> 63) == 0 else -1.0
    return h % cfg.dim, sign


def embed_text(cfg: EmbedderConfig, text: str) -> np.ndarray:
    """Embed text as a unit-norm float64 vector of length cfg.dim.

    Raises EmptyText when tokenization yields no tokens. Multi-token n-grams
    (ngram_max > 1) are joined with a single space before hashing.
    """
    tokens = tokenize(text)
    if not tokens:
        raise EmptyText(f"no tokens in text: {text!r}")
    vec = np.zeros(cfg.dim, dtype=np.float64)
    for n in range(1, cfg.ngram_max + 1):
        for i in range(len(tokens) - n + 1):
            gram = " ".join(tokens[i : i + n]) if n > 1 else tokens[i]
            bucket, sign = hash_ngram(cfg, gram)
            vec[bucket] += sign
    norm = float(np.sqrt(np.dot(vec, vec)))
    if norm == 0.0:
        # Opposite-signed collisions cancelled every bucket; fall back to the
        # first token's lone contribution so the output stays directional.
        bucket, sign = hash_ngram(cfg, tokens[0])
        vec[bucket] = sign
        norm = 1.0
    return vec / norm


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimMismatch(f"shape {u.shape} vs {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite input vector")
    nu = float(np.sqrt(np.dot(u, u)))
    nv = float(np.sqrt(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise ZeroNorm("cosine similarity undefined for zero vector")
    return float(np.dot(u, v) / (nu * nv))
