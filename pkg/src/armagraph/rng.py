"""Seeding helpers.

All randomness flows through counter-based Philox generators derived from a
single recorded integer seed, so runs are reproducible bit-for-bit and
independent streams can be split off without coordination.
"""

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Generator for a recorded integer seed (or a spawned SeedSequence)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_rng(seed, n: int) -> list[np.random.Generator]:
    """n independent generators derived from one seed."""
    root = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(n)]
