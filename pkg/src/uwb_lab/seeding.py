"""Seed splitting for reproducible parallel Monte-Carlo."""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def trial_seed(master: int, index: int) -> int:
    """Seed for trial ``index``; identical whether trials run serially or in parallel."""
    return splitmix64((int(master) + int(index)) & _MASK)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & _MASK)
