"""Reproducible random streams.

Every stochastic routine in the package draws from a :class:`RandomSource`,
which wraps a counter-based generator keyed by ``(master_seed, stream)``.
Two sources built from the same key produce the same variate sequence no
matter how many worker threads are running, so ensemble experiments assign
one stream per replica (or per replica block) and aggregate in stream order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RandomSource", "ZeroNoise"]


def _seed_sequence(master_seed, path):
    return np.random.SeedSequence(master_seed, spawn_key=tuple(path))


class RandomSource:
    """Deterministic random stream keyed by ``(master_seed, stream)``.

    ``child(*indices)`` derives an independent substream; children with
    distinct index paths never collide, which is what lets replicas run in
    any order or thread count without changing results.
    """

    def __init__(self, master_seed, stream=0, _path=()):
        self.master_seed = int(master_seed)
        self.stream = int(stream)
        self._path = (int(stream),) + tuple(int(p) for p in _path)
        self._gen = np.random.Generator(
            np.random.Philox(key=_seed_sequence(self.master_seed, self._path).generate_state(2, np.uint64))
        )

    def child(self, *indices):
        """Independent substream addressed by an integer index path."""
        return RandomSource(self.master_seed, self.stream, _path=self._path[1:] + tuple(indices))

    # -- variate draws ------------------------------------------------------

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def complex_normal(self, size=()):
        """Standard complex Gaussians: Re and Im are independent N(0, 1/2)."""
        shape = tuple(size) + (2,)
        g = self._gen.standard_normal(shape)
        return (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)

    def gamma(self, shape, scale=1.0, size=None):
        return self._gen.gamma(shape, scale, size)

    def exponential(self, size=None):
        return self._gen.standard_exponential(size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def __repr__(self):
        return f"RandomSource(master_seed={self.master_seed}, stream={self.stream})"


class ZeroNoise:
    """Drop-in noise source that returns zeros; turns SDE steppers into ODE steps."""

    master_seed = -1
    stream = -1

    def child(self, *indices):
        return self

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def complex_normal(self, size=()):
        return np.zeros(tuple(size), dtype=complex)
