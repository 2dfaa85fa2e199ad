"""Text embeddings and the exact vector math used everywhere else.

Embeddings come from either a remote HTTP endpoint (set TCR_EMBED_URL) or a
deterministic offline fallback built on signed character n-gram hashing.
The fallback needs no network or model files and keeps the property that
paraphrases land nearer to their source than unrelated sentences.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import requests

from .errors import (
    ConfigError,
    DegenerateVectorError,
    DimensionError,
    EmptyInputError,
    ProtocolError,
    RemoteEmbedError,
)

SOURCE_REMOTE = "remote"
SOURCE_HASH = "hash-fallback"

EMBED_URL_ENV = "TCR_EMBED_URL"


@dataclass(frozen=True)
class EmbeddingVector:
    """A finite real vector plus where it came from."""

    values: np.ndarray
    source: str = SOURCE_HASH

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionError(f"embedding must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DegenerateVectorError("embedding contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


VectorLike = Union[EmbeddingVector, Sequence[float], np.ndarray]


def _as_array(v: VectorLike) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    return np.asarray(v, dtype=np.float64)


def cosine(u: VectorLike, v: VectorLike) -> float:
    """Cosine similarity <u,v>/(|u||v|), clamped to [-1, 1]."""
    a = _as_array(u)
    b = _as_array(v)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine undefined for zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalize(v: VectorLike, source: str | None = None) -> EmbeddingVector:
    """Scale to unit L2 norm, preserving direction."""
    a = _as_array(v)
    n = float(np.linalg.norm(a))
    if n == 0.0:
        raise DegenerateVectorError("cannot normalize zero vector")
    if source is None:
        source = v.source if isinstance(v, EmbeddingVector) else SOURCE_HASH
    return EmbeddingVector(values=a / n, source=source)


def _stable_hash(data: bytes, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str, dim: int, seed: int = 0) -> EmbeddingVector:
    """Deterministic embedding from signed character bigram/trigram hashing.

    Pure function of (text, dim, seed); byte-identical across runs and
    platforms. Each n-gram hashes to a bucket and a sign, counts accumulate,
    and the result is unit-normalized.
    """
    if dim < 8:
        raise ConfigError(f"dim must be >= 8, got {dim}")
    lowered = text.lower()
    grams = []
    for n in (2, 3):
        grams.extend(lowered[i : i + n] for i in range(len(lowered) - n + 1))
    if not grams:
        grams = [lowered or "\x00"]
    vec = np.zeros(dim, dtype=np.float64)
    for gram in grams:
        h = _stable_hash(gram.encode("utf-8"), seed)
        idx = (h >> 1) % dim
        vec[idx] += 1.0 if h & 1 else -1.0
    if not vec.any():
        vec[_stable_hash(lowered.encode("utf-8"), seed) % dim] = 1.0
    return normalize(vec, source=SOURCE_HASH)


@dataclass
class EmbedConfig:
    """Where embeddings come from. A null url selects the hash fallback."""

    url: str | None = None
    dim: int = 256
    seed: int = 0
    batch_size: int = 64
    timeout: float = 10.0

    @classmethod
    def from_env(cls, **overrides) -> "EmbedConfig":
        url = os.environ.get(EMBED_URL_ENV) or None
        return cls(url=url, **overrides)


def _embed_remote(texts: list[str], config: EmbedConfig) -> list[EmbeddingVector]:
    out: list[EmbeddingVector] = []
    expected_dim: int | None = None
    for start in range(0, len(texts), config.batch_size):
        chunk = texts[start : start + config.batch_size]
        try:
            resp = requests.post(
                config.url, json={"texts": chunk}, timeout=config.timeout
            )
        except requests.RequestException as exc:
            raise RemoteEmbedError(f"embedding endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteEmbedError(
                f"embedding endpoint returned {resp.status_code}",
                status=resp.status_code,
            )
        try:
            payload = resp.json()
            rows = payload["embeddings"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed embedding response: {exc}") from exc
        if not isinstance(rows, list) or len(rows) != len(chunk):
            raise ProtocolError(
                f"expected {len(chunk)} embeddings, got "
                f"{len(rows) if isinstance(rows, list) else type(rows).__name__}"
            )
        for row in rows:
            try:
                vec = EmbeddingVector(np.asarray(row, dtype=np.float64), SOURCE_REMOTE)
            except (TypeError, ValueError, DimensionError, DegenerateVectorError) as exc:
                raise ProtocolError(f"bad embedding row: {exc}") from exc
            if expected_dim is None:
                expected_dim = vec.dim
            elif vec.dim != expected_dim:
                raise ProtocolError(
                    f"inconsistent embedding dims: {vec.dim} vs {expected_dim}"
                )
            out.append(vec)
    return out


def embed_batch(texts: Sequence[str], config: EmbedConfig) -> list[EmbeddingVector]:
    """Embed texts in order, via the remote endpoint or the hash fallback."""
    texts = list(texts)
    if not texts:
        raise EmptyInputError("embed_batch needs at least one text")
    if config.url:
        return _embed_remote(texts, config)
    return [hash_embed(t, config.dim, config.seed) for t in texts]
