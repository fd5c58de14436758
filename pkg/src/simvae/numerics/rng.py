"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by the master seed
plus a path of integers (stream name, epoch, source index, ...). Sub-streams
are therefore independent of the order in which they are requested, which
keeps augmentation and sampling reproducible across resumes.
"""

from __future__ import annotations

import zlib

import numpy as np

from .tensor import Tensor, get_dtype

ALGORITHM = "philox4x64-10/seedsequence"


def _key_part(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


class Rng:
    """A reproducible stream identified by ``(seed, key)``."""

    algorithm = ALGORITHM

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(_key_part(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def stream(self, *key) -> "Rng":
        """Independent child stream; does not advance this stream."""
        return Rng(self.seed, self.key + tuple(_key_part(k) for k in key))

    def normal(self, shape, dtype=np.float64) -> np.ndarray:
        return self.gen.standard_normal(shape, dtype=dtype)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def random(self, size=None):
        return self.gen.random(size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


def gaussian_sample(rng: Rng, shape) -> Tensor:
    """I.i.d. standard normal draws as a (non-tracking) tensor."""
    dtype = get_dtype()
    return Tensor(rng.normal(shape, dtype=dtype), dtype=dtype)
