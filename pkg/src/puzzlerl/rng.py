"""Deterministic seed derivation.

Every stochastic component takes an integer seed derived from a master seed
plus a tuple of string/int tags, so independent subsystems never share
streams and full runs replay bit-identically.
"""

import hashlib

import numpy as np


def child_seed(*parts) -> int:
    """Derive a 63-bit seed from an arbitrary tuple of hashable parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def make_rng(*parts) -> np.random.Generator:
    """Generator seeded from child_seed(*parts)."""
    return np.random.Generator(np.random.PCG64(child_seed(*parts)))
