"""Deterministic RNG derivation from a master seed."""

import zlib

import numpy as np


def rng_for(seed, tag):
    """A Generator keyed by (seed, tag); stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))
