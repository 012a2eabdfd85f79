"""Named random streams derived from one 64-bit seed.

``stream(seed, "target", 3)`` spawns from ``SeedSequence(seed)`` with the spawn
key ``(crc32("target"), 3)``. Streams are addressed by name, so adding a new
stream never shifts the numbers drawn from existing ones.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["MAX_SEED", "check_seed", "stream"]

MAX_SEED = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed, name, *index):
    """Independent ``numpy`` generator for ``(seed, name, *index)``."""
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
