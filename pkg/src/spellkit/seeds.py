"""Deterministic seed derivation: one root seed, named substreams everywhere."""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root: int, *names: object) -> int:
    """Derive a 64-bit seed from a root seed and a path of stream names.

    Uses SHA-256 over a canonical encoding so the mapping is stable across
    platforms and Python versions (no reliance on hash()).
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode("ascii"))
    for name in names:
        h.update(b"/")
        h.update(str(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & _MASK64


def rng_for(root: int, *names: object) -> np.random.Generator:
    """A PCG64 generator seeded from derive_seed(root, *names)."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *names)))
