"""Seeded random streams.

Every stochastic component draws from a :class:`SeededRng` so that a run is
fully determined by its master seed.  Gaussian variates are produced by
Box-Muller on top of the uniform stream (rather than the generator's native
normal method) so the exact sequence of draws is pinned by this module alone.
Independent sub-streams are derived by hashing the parent seed together with
a string/integer key, which keeps concurrent consumers (chains, matrix cells,
shuffling vs. attack noise) from sharing state.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["SeededRng", "derive_seed"]

_TWO_PI = 2.0 * np.pi


def derive_seed(seed: int, *key) -> int:
    """Derive a child seed from ``seed`` and a sequence of str/int key parts."""
    text = str(int(seed)) + "".join("/" + str(part) for part in key)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    """Deterministic random source backed by PCG64."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, *key) -> "SeededRng":
        """Independent child stream keyed by ``key`` (order-sensitive)."""
        return SeededRng(derive_seed(self.seed, *key))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def standard_normal(self, size=None):
        """N(0,1) variates via Box-Muller on the uniform stream."""
        if size is None:
            return float(self.standard_normal(size=1)[0])
        shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        # uniform() yields [0,1); flip to (0,1] so log() is safe
        u1 = 1.0 - self._gen.uniform(size=pairs)
        u2 = self._gen.uniform(size=pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(_TWO_PI * u2)
        z[1::2] = radius * np.sin(_TWO_PI * u2)
        return z[:n].reshape(shape)
