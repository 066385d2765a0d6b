"""Keyed, counter-based random streams.

All randomness in the library flows through ``Rng``, a thin wrapper over
numpy's Philox counter-based generator. A stream is addressed by
``(seed, purpose, index)``: the purpose is a registered small integer and
the index is typically a step or sample number. Because streams are keyed
rather than sequential, any single draw can be reproduced without
replaying the run, which is what makes checkpoint resume bit-exact.

Philox output is platform-independent, so a seed gives the same streams
everywhere.
"""

from __future__ import annotations

import numpy as np

# Registered stream purposes. Each purpose gets an independent key space;
# add new consumers here rather than reusing an id.
PURPOSES = {
    "gen_init": 1,
    "disc_init": 2,
    "dropout": 3,
    "shuffle": 4,
    "crop": 5,
    "mirror": 6,
    "synth": 7,
    "test": 15,
}

_INDEX_BITS = 48


class Rng:
    """Factory of independent, reproducible random streams for one seed."""

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)

    def stream(self, purpose: str, index: int = 0) -> np.random.Generator:
        """Fresh generator for (seed, purpose, index)."""
        pid = PURPOSES.get(purpose)
        if pid is None:
            raise ValueError(f"unregistered rng purpose {purpose!r}; known: {sorted(PURPOSES)}")
        if not 0 <= index < 2 ** _INDEX_BITS:
            raise ValueError(f"stream index out of range: {index}")
        key = np.array([self.seed, (pid << _INDEX_BITS) | index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
