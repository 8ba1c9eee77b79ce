"""Independent random streams keyed by (seed, tag, ...) tuples."""

from __future__ import annotations

import numpy as np

TAG_PARTITION = 1
TAG_TRUNCATE = 2
TAG_DOWNWEIGHT = 3
TAG_SAMPLE = 4
TAG_CLIENT = 5
TAG_EVAL = 6
TAG_AVAILABILITY = 7
TAG_INIT = 8
TAG_CENTRAL = 9
TAG_SYNTH = 10


def rng_for(*keys: int) -> np.random.Generator:
    """A generator whose stream depends only on ``keys``.

    Streams for different key tuples are statistically independent, so work
    keyed by (seed, round, client) can run in any order or in parallel.
    """
    if any(int(k) < 0 for k in keys):
        raise ValueError("seed keys must be non-negative")
    return np.random.default_rng([int(k) for k in keys])
