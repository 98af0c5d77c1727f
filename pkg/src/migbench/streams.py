"""Counter-based sample streams, keyed by (seed, epoch, thread).

Every solver draws its component indices from a Philox generator seeded
through SeedSequence(seed, spawn_key=(epoch, thread)). Streams for distinct
keys are statistically independent, a run is bitwise reproducible for a
fixed seed, and an async worker with thread id 0 consumes exactly the
stream a serial solver would - which is what makes the one-thread
equivalence checks exact. Scalar draws and block draws from the same key
produce the same sequence, so either style may be used.
"""

from __future__ import annotations

import numpy as np


def epoch_stream(seed: int, epoch: int, thread: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, epoch, thread) key."""
    if seed < 0 or epoch < 0 or thread < 0:
        raise ValueError("seed, epoch and thread must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(epoch, thread))
    return np.random.Generator(np.random.Philox(ss))


def draw_indices(seed: int, epoch: int, n: int, m: int, thread: int = 0) -> np.ndarray:
    """The first m component indices of stream (seed, epoch, thread)."""
    return epoch_stream(seed, epoch, thread).integers(0, n, size=m)
