"""Portable seeded randomness.

Philox is counter-based and numpy's normal sampler is the ziggurat method,
so a seed reproduces the same stream on every platform.
"""
import zlib

import numpy as np


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def derive_seed(*parts):
    """Stable 63-bit seed from a tuple of ints and strings."""
    words = [zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
