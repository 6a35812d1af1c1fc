"""Counter-based random streams keyed by (seed, sample index, purpose).

Every Monte Carlo sample draws from its own Philox stream, so results do not
depend on how samples are split across workers or batches.
"""
from __future__ import annotations

import numpy as np

FIELD = 0
EDGES = 1
PATH = 2
PROBES = 3
MISC = 4

_MASK64 = (1 << 64) - 1
_MASK48 = (1 << 48) - 1


def stream(seed: int, index: int, purpose: int = FIELD) -> np.random.Generator:
    if not 0 <= purpose < (1 << 16):
        raise ValueError("purpose tag out of range")
    key = np.array([seed & _MASK64, ((index & _MASK48) << 16) | purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def seed_path(seed: int, index: int) -> tuple[int, int]:
    return (int(seed), int(index))
