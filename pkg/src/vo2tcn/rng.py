"""Seeded random streams.

Every stochastic step (weight init, dropout masks, shuffling, simulator noise,
cohort sampling) draws from an :class:`RngStream`. Streams are numpy ``PCG64``
generators keyed by a :class:`numpy.random.SeedSequence`, which is specified
bit-for-bit and therefore reproduces across platforms and numpy versions that
keep the PCG64 stream stable.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "PCG64"


def _key(part) -> int:
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    # stable across processes, unlike hash()
    return zlib.crc32(str(part).encode("utf-8"))


class RngStream:
    """Deterministic random stream derived from ``seed`` and optional keys.

    ``RngStream(7, "P03", "L-H")`` always yields the same draws, independent of
    how many other streams were created before it.
    """

    algorithm = ALGORITHM

    def __init__(self, seed: int, *keys):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.keys = tuple(_key(k) for k in keys)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.keys)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys) -> RngStream:
        return RngStream(self.seed, *self.keys, *keys)

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, keys={self.keys}, algorithm={ALGORITHM!r})"
