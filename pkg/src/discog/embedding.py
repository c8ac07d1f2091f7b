"""Text-embedding providers and vector primitives.

A provider is anything with a ``dimension`` attribute and a
deterministic ``embed(text) -> np.ndarray`` method (same text, same
bytes). Two implementations ship here:

  HashedTfidfProvider   signed feature hashing of tokens, weighted by
                        corpus IDF and L2-normalized. No external model
                        weights, bitwise reproducible.
  PrecomputedProvider   exact-match lookup in a JSON Lines table
                        ({"text": ..., "vector": [...]}) so genuine
                        neural embeddings can be plugged in.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import warnings
from typing import Protocol

import numpy as np

from .errors import DimensionMismatch, MalformedRecord, UnknownText

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_DIMENSION = 384


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; shared by every text consumer."""
    return _TOKEN_RE.findall(text.lower())


def cosine(a, b) -> float:
    """Cosine similarity in [-1, 1]; 0.0 (with a warning) if either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine of a zero vector is 0 by convention", stacklevel=2)
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def fingerprint(self) -> str: ...


def _token_hash(token: str) -> int:
    # Keyed stdlib hash, *not* the salted builtin: values must be stable
    # across processes.
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


class HashedTfidfProvider:
    """Deterministic dense text vectors without model weights.

    Each token hashes to a bucket with a pseudo-random sign; bucket
    weights are tf * idf and the result is L2-normalized. IDF comes
    from ``fit`` / ``from_texts``; unfitted providers weight all tokens
    equally.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension <= 0:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self._idf: dict[str, float] = {}
        self._default_idf = 1.0
        self._fitted_on = 0

    @classmethod
    def from_texts(cls, texts, dimension: int = DEFAULT_DIMENSION) -> "HashedTfidfProvider":
        provider = cls(dimension)
        provider.fit(texts)
        return provider

    def fit(self, texts) -> None:
        """Compute smoothed IDF over the given texts."""
        df: dict[str, int] = {}
        n = 0
        for text in texts:
            n += 1
            for token in set(tokenize(text)):
                df[token] = df.get(token, 0) + 1
        self._fitted_on = n
        self._idf = {tok: math.log((n + 1) / (count + 1)) + 1.0 for tok, count in df.items()}
        self._default_idf = math.log(n + 1) + 1.0 if n else 1.0

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            h = _token_hash(token)
            idx = h % self.dimension
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[idx] += sign * self._idf.get(token, self._default_idf)
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(f"hashed-tfidf:{self.dimension}:{self._fitted_on}".encode())
        for token in sorted(self._idf):
            h.update(f"{token}={self._idf[token]!r};".encode())
        return h.hexdigest()


class PrecomputedProvider:
    """Lookup table of text -> vector loaded from a JSON Lines file."""

    def __init__(self, table: dict[str, np.ndarray], source: str = ""):
        if not table:
            raise ValueError("precomputed vector table is empty")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"vectors of mixed dimensions {sorted(dims)}")
        self.dimension = dims.pop()
        self._table = {text: np.asarray(vec, dtype=np.float64) for text, vec in table.items()}
        self._source = source

    @classmethod
    def from_jsonl(cls, path) -> "PrecomputedProvider":
        table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})") from None
                if "text" not in record or "vector" not in record:
                    raise MalformedRecord(line_number, "expected fields 'text' and 'vector'")
                table[record["text"]] = np.asarray(record["vector"], dtype=np.float64)
        return cls(table, source=str(path))

    def embed(self, text: str) -> np.ndarray:
        try:
            return self._table[text]
        except KeyError:
            raise UnknownText(f"no precomputed vector for text {text[:80]!r}") from None

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(f"precomputed:{self.dimension}:{len(self._table)}".encode())
        for text in sorted(self._table):
            h.update(text.encode("utf-8"))
            h.update(self._table[text].tobytes())
        return h.hexdigest()
