"""Deterministic, domain-separated seed derivation.

All randomized steps (mask selection, bucket assignment, fallback pairing)
draw from independent streams derived from the one user-facing seed.  Domain
separation means changing a parameter that feeds one stream (say, rho) never
reshuffles another (say, bucket layout).
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_PREFIX = b"alienlang.v1"


def derive_seed(*parts: object) -> int:
    """128-bit integer seed from a domain string plus arbitrary parts.

    Parts are length-prefixed before hashing so ("ab", "c") and ("a", "bc")
    derive different seeds.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(_PREFIX)
    for part in parts:
        blob = part if isinstance(part, bytes) else str(part).encode("utf-8")
        h.update(struct.pack("<Q", len(blob)))
        h.update(blob)
    return int.from_bytes(h.digest(), "big")


def derive_rng(*parts: object) -> np.random.Generator:
    """PCG64 generator seeded from :func:`derive_seed` of the parts."""
    return np.random.default_rng(derive_seed(*parts))
