"""Stable seed derivation.

Seeds for strata, shoppers and stages are derived from the master seed by hashing a textual key, so results
never depend on evaluation order or on Python's randomized ``hash``.
"""

import hashlib
from typing import Union

import numpy as np

Key = Union[str, int]


def derive_seed(master: int, *keys: Key) -> int:
    """Derive a 63-bit seed from the master seed and a key path.

    Args:
        master: Master seed
        *keys: Key components, e.g. ``("match", "female:15-24")``

    Returns:
        Non-negative integer seed
    """
    text = ":".join([str(master), *[str(k) for k in keys]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(master: int, *keys: Key) -> np.random.Generator:
    """Return a numpy Generator seeded from ``derive_seed(master, *keys)``."""
    return np.random.default_rng(derive_seed(master, *keys))
