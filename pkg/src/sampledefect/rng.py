"""Seed derivation for reproducible, order-independent replicates.

Replicate ``r`` of a run with master seed ``s`` uses the ``r``-th output of
a SplitMix64 stream started at ``s``::

    x  = (s + (r + 1) * 0x9E3779B97F4A7C15) mod 2**64
    x  = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    x  = (x ^ (x >> 27)) * 0x94D049BB133111EB mod 2**64
    s' = x ^ (x >> 31)

``s'`` then seeds numpy's PCG64 bit generator. Each replicate's seed is a
pure function of ``(s, r)``, so replicates can run in any order or in
parallel.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, replicate: int) -> int:
    if replicate < 0:
        raise ValueError("replicate index must be non-negative")
    return splitmix64((master_seed & MASK64) + (replicate + 1) * GOLDEN_GAMMA)


def make_generator(seed: int) -> np.random.Generator:
    if seed < 0 or seed > MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(seed))
