"""Counter-based random streams derived from one global seed.

Each consumer (a dropout layer, a batch sampler, an environment) owns a
``RngStream`` keyed by ``(seed, stream_id)``.  Every draw request increments a
counter and returns a fresh generator seeded from ``(seed, stream_id, counter)``,
so results depend only on the seed and the call order within that stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class RngStream:
    def __init__(self, seed: int, name: str = "default"):
        self.seed = int(seed)
        self.stream_id = stream_key(name)
        self.counter = 0

    def next(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, self.stream_id, self.counter])
        self.counter += 1
        return np.random.Generator(np.random.Philox(ss))

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.seed = int(seed)
        self.counter = 0
