"""Deterministic seed derivation: one root seed, independent named streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *purpose) -> int:
    """Hash (seed, purpose path) to a 64-bit sub-seed, stable across platforms."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for part in purpose:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(seed: int, *purpose) -> np.random.Generator:
    """Fresh PCG64 generator for one named purpose under the root seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *purpose)))
