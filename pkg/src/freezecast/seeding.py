"""Deterministic derivation of independent RNG streams.

Every stochastic component in the package draws from a numpy Generator
obtained through :func:`spawn_rng`. A stream is identified by a master
seed plus an arbitrary key path (strings and integers), hashed into the
generator seed. Streams are therefore independent of generation order:
regenerating a subset of a dataset, or processing locations in parallel,
yields bit-identical numbers.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(master_seed: int, *key: object) -> int:
    """Hash ``(master_seed, *key)`` into a 256-bit integer seed."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in key:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def spawn_rng(master_seed: int, *key: object) -> np.random.Generator:
    """Return the Generator for the stream identified by ``key``."""
    return np.random.default_rng(np.random.SeedSequence(stream_seed(master_seed, *key)))
