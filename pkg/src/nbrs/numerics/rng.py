"""Seeded random streams with a reproducibility contract: the same seed and
the same call sequence produce the same outputs, across runs and platforms."""

from __future__ import annotations

import zlib

import numpy as np


class RngState:
    """A named, counted wrapper around numpy's PCG64 generator."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.calls = 0
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def child(self, tag: str) -> "RngState":
        """Derive an independent stream keyed by ``tag`` (position-free, so
        adding a new child does not disturb existing ones)."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(tag.encode("utf-8"))])
        return RngState(int(ss.generate_state(1, np.uint64)[0]) % (2**63))

    def random(self, shape=None):
        self.calls += 1
        return self._gen.random(shape)

    def integers(self, low, high=None, size=None):
        self.calls += 1
        return self._gen.integers(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.calls += 1
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.calls += 1
        return self._gen.uniform(low, high, size)

    def permutation(self, n: int):
        self.calls += 1
        return self._gen.permutation(n)

    def choice(self, n, size, replace=True):
        self.calls += 1
        return self._gen.choice(n, size=size, replace=replace)
