"""Deterministic named random streams.

Every stochastic site in the toolkit (weight init, dropout, shuffling,
splits) draws from its own counter-based stream derived from the single
run seed plus a site name, so runs are bitwise reproducible and adding a
new stochastic site never perturbs existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent Philox generator keyed by (seed, name)."""
    digest = hashlib.blake2b(f"{seed}:{name}".encode("utf-8"), digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def token_key(token: str) -> int:
    """Stable 64-bit hash of a token (Python's hash() is salted per process)."""
    return int.from_bytes(
        hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
    )
