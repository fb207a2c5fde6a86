"""Counter-based random streams keyed by (seed, phase, interval).

Each sampling site in the three filter passes gets its own Philox stream so
that results do not depend on execution interleaving and reruns with the same
seed are bit-identical.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# phase identifiers
PHASE_SIM = 0
PHASE_FORWARD = 1
PHASE_BACKWARD = 2
PHASE_SMOOTH = 3
PHASE_SPLIT = 4

# One fixed-key base generator per process; streams are pure counter jumps
# from it, so construction never touches the entropy pool.
_BASE = np.random.Philox(counter=np.zeros(4, dtype=np.uint64),
                         key=np.array([0x5DEECE66D, 0x9E3779B97F4A7C15], dtype=np.uint64))


def stream(seed: int, phase: int, interval: int = 0) -> np.random.Generator:
    """Independent Generator for one (seed, phase, interval) site."""
    word = ((int(phase) & 0xFFFF) << 48) | (int(interval) & ((1 << 48) - 1))
    jumps = ((int(seed) & _MASK64) << 64) | word
    return np.random.Generator(_BASE.jumped(jumps))
