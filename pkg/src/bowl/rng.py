"""Seeded substream derivation for reproducible, parallel-safe sampling."""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent Generator for (seed, key).

    Streams for distinct keys are statistically independent and do not
    depend on process/thread scheduling, so work items (chains, replications)
    can be farmed out in any order and still reproduce bit-for-bit.
    """
    if key:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    else:
        ss = np.random.SeedSequence(entropy=int(seed))
    return np.random.default_rng(ss)
