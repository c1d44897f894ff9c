"""Seeded, splittable random streams.

Every random draw in the package comes from a Philox generator (counter
based, so independent streams are cheap to derive).  Streams are keyed by a
master seed plus a tuple of integers such as ``(point_index, rep_index)``;
the same key always yields the same stream.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20210301

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys: int) -> int:
    """Return a 64-bit seed for the stream identified by ``(master, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(master) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


def stream(master: int, *keys: int) -> np.random.Generator:
    """Shorthand for ``make_rng(derive_seed(master, *keys))``."""
    return make_rng(derive_seed(master, *keys))
