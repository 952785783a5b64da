"""Seeded random streams.

Every randomized entry point takes either a 64-bit integer seed or an
already-constructed ``numpy.random.Generator``. Integer seeds feed PCG64, so a
given seed reproduces the same stream on any platform numpy supports.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def child_seed(base_seed: int, index: int) -> int:
    """Seed for trial ``index``: ``base_seed + index`` with 64-bit wraparound."""
    return (int(base_seed) + int(index)) & MASK64
