"""Deterministic, splittable random streams.

Every randomized routine takes an explicit integer seed. Independent
sub-streams (per video, per report cell) are derived by hashing the master
seed together with string labels via BLAKE2b, so results do not depend on
the order or parallelism in which streams are consumed. Generators are
numpy PCG64, the package-wide documented RNG.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: str) -> int:
    """Derive a 64-bit child seed from a master seed and stream labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def derive_rng(seed: int, *labels: str) -> np.random.Generator:
    """PCG64 generator for the sub-stream named by ``labels``.

    Without labels the master seed is used directly, so
    ``derive_rng(seed)`` matches ``np.random.default_rng(seed)``.
    """
    if labels:
        return np.random.default_rng(derive_seed(seed, *labels))
    return np.random.default_rng(int(seed))
