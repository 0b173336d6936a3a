"""Deterministic stream splitting for seeded, parallel Monte Carlo.

All randomness in the library flows from a single master seed.  Every path in
every ensemble owns a private generator derived from ``(master, stream, index)``
so that a path's draws do not depend on the ensemble size, the block layout or
the number of workers.
"""

from __future__ import annotations

import numpy as np

# Stream identifiers: one per independent source of randomness.
SIM_STREAM = 0
HESTON_STREAM = 1
PRICING_STREAM = 2
FUNCTIONAL_STREAM = 3
OPTION_MM_STREAM = 4

DEFAULT_BLOCK = 4096


def path_seed(master: int, stream: int, index: int) -> np.random.SeedSequence:
    """Seed sequence for one path, independent of how many paths are run."""
    return np.random.SeedSequence(entropy=master, spawn_key=(stream, index))


def path_generator(master: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(path_seed(master, stream, index))


def block_ranges(n: int, block: int = DEFAULT_BLOCK) -> list[tuple[int, int]]:
    """Split ``range(n)`` into contiguous blocks processed independently."""
    if n <= 0:
        raise ValueError("n must be positive")
    return [(lo, min(lo + block, n)) for lo in range(0, n, block)]
