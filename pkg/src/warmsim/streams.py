"""Deterministic parallel random streams.

Every replication draws from a PCG64 generator seeded by hashing the 64-bit
master seed together with the replication index through numpy's SeedSequence
(a 128-bit mixing pool).  Streams therefore depend only on (master_seed,
index), never on worker count or scheduling order.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(master_seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence((int(master_seed) & _MASK64, int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def stream_fingerprint(master_seed: int, index: int) -> int:
    """Stable 64-bit label for a substream, reported in result files."""
    ss = np.random.SeedSequence((int(master_seed) & _MASK64, int(index)))
    return int(ss.generate_state(1, np.uint64)[0])
