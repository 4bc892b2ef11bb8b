"""Embedding providers: named backends behind one batch interface.

Two deterministic mocks ship with the package so every test runs offline.
Real network backends register a factory in PROVIDERS under their name
string; the extractor is indifferent to what happens inside embed().
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass

import numpy as np


class ProviderError(RuntimeError):
    """A single embed() call failed; the extractor may retry it."""


@dataclass
class ProviderConfig:
    """Where requests go and how they are paced.

    credentials names a source (an env var, a file, "none"); it is recorded,
    never interpreted by the mocks.
    """

    provider: str
    model: str = "default"
    batch_size: int = 64
    max_retries: int = 3
    rate_limit: float = 0.0  # requests per second; 0 = unlimited
    credentials: str = "none"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.rate_limit < 0:
            raise ValueError(f"rate_limit must be >= 0, got {self.rate_limit}")

    @property
    def tag(self) -> str:
        """Identity string written to journals and sidecars."""
        return f"{self.provider}/{self.model}"


class Provider:
    """Base backend: subclasses fill in _embed_batch.

    Thread-safe call counters support the extractor's accounting and the
    request-budget checks in tests.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.rows_requested = 0

    def embed(self, texts: list[str]) -> np.ndarray:
        with self._lock:
            self.calls += 1
            self.rows_requested += len(texts)
        return self._embed_batch(texts)

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


class FixedVectorProvider(Provider):
    """Every text maps to the same basis vector [1, 0, ..., 0]."""

    def __init__(self, dim: int = 8):
        super().__init__()
        self.dim = dim

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        out[:, 0] = 1.0
        return out


class HashProvider(Provider):
    """Deterministic pseudo-embeddings from a cryptographic hash of the text.

    Each 8-float block comes from sha256(model, text, block index), so the
    vector depends only on those strings, never on platform or run.
    """

    def __init__(self, dim: int = 8, model: str = "default"):
        super().__init__()
        self.dim = dim
        self.model = model

    def _vector(self, text: str) -> np.ndarray:
        blocks = []
        for b in range((self.dim + 7) // 8):
            digest = hashlib.sha256(
                f"{self.model}\x1f{text}\x1f{b}".encode("utf-8")
            ).digest()
            words = struct.unpack("<8I", digest)
            blocks.extend(w / 2.0**31 - 1.0 for w in words)
        return np.asarray(blocks[: self.dim], dtype=np.float32)

    def _embed_batch(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts])


def _parse_dim(name: str, default: int) -> tuple[str, int]:
    # "mock-hash:16" selects a 16-wide mock
    base, _, suffix = name.partition(":")
    if not suffix:
        return base, default
    dim = int(suffix)
    if dim < 1:
        raise ValueError(f"provider dimension must be >= 1, got {dim}")
    return base, dim


PROVIDERS = {
    "mock-hash": lambda cfg, dim: HashProvider(dim, cfg.model),
    "mock-fixed": lambda cfg, dim: FixedVectorProvider(dim),
}


def make_provider(config: ProviderConfig) -> Provider:
    base, dim = _parse_dim(config.provider, default=8)
    factory = PROVIDERS.get(base)
    if factory is None:
        known = ", ".join(sorted(PROVIDERS))
        raise ValueError(f"unknown provider {base!r} (known: {known})")
    return factory(config, dim)
