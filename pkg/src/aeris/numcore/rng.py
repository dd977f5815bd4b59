"""Seeded randomness.

Every stream is Philox4x64-10 (a counter-based generator) keyed by the
64-bit seed. Child stream ``i`` uses the 128-bit key ``seed + (i + 1) * 2**64``,
so children never collide with the parent or each other and do not depend on
how many numbers the parent has produced.
"""
import numpy as np

_MASK64 = (1 << 64) - 1


class SeededRng:
    def __init__(self, seed, stream=None):
        self.seed = int(seed) & _MASK64
        self.stream = stream
        key = self.seed if stream is None else self.seed + ((int(stream) + 1) << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, index):
        return SeededRng(self.seed, index)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"
