"""Seeded random substreams.

Every random quantity in the package is drawn from a PCG64 generator keyed
by a ``numpy.random.SeedSequence`` built from the user seed plus a tuple of
integer keys (stream tag, draw index, block index, ...). The mapping
``(seed, keys) -> stream`` is a pure function, so results do not depend on
call order, worker count or platform.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError

UINT64_MAX = 2**64 - 1

# stream tags; values are part of the reproducibility contract
CHANNEL_DRAW = 1
WEIGHT_SEARCH = 2
MAPPING_SEARCH = 3
SYMBOLS = 4
STATS_DRAWS = 5
DRAW_SEEDS = 6


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= UINT64_MAX:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([check_seed(seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, *keys: int) -> int:
    """Derive a new 64-bit seed from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([check_seed(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
