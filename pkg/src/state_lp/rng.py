"""Counter-based random streams.

All randomness goes through Philox4x64. A stream is addressed by a 64-bit
key and up to three integer indices placed in the high words of the
256-bit counter, so streams never overlap (each owns 2**64 blocks in the
low word) and any stream can be regenerated without touching the others.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, *index: int) -> np.random.Generator:
    """Generator for stream ``index`` (at most three nonnegative ints) under ``seed``."""
    if len(index) > 3:
        raise ValueError("at most three stream indices")
    words = [0, 0, 0, 0]
    for pos, value in enumerate(reversed(index)):
        words[3 - pos] = int(value) & _MASK
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK, counter=words))


def derive_seed(seed: int, *index: int) -> int:
    """Deterministic child seed; used to hand independent keys to sub-tasks."""
    ss = np.random.SeedSequence([int(seed) & _MASK] + [int(i) & _MASK for i in index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
