"""Deterministic seed derivation.

Every random decision in the pipeline draws from a substream seeded by
hashing (global_seed, stage, id, ...). Substreams are independent of
iteration order, so parallel or resumed runs reproduce serial ones.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from any mix of ints/strings. Not Python's hash()."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(*parts) -> np.random.Generator:
    """Fresh numpy Generator for the substream named by parts."""
    return np.random.default_rng(derive_seed(*parts))
