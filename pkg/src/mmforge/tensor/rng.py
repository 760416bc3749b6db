"""Seeded random streams.

Streams use numpy's PCG64 bit generator keyed by a ``SeedSequence`` built
from the 64-bit seed and a spawn path. PCG64 output is specified by its
reference implementation, so an identical (seed, path) yields an identical
stream on every platform. ``substream(i)`` extends the path, giving
independent streams for parallel units (MC passes, tasks, epochs) without
sharing generator state between threads.
"""

from enum import IntEnum

import numpy as np
import numpy.typing as npt

from mmforge.types import FloatArray, Shape

_MAX_SEED = 2**64


class Stream(IntEnum):
    """Top-level substreams of a run seed."""

    INIT = 0
    TRAIN = 1
    EVAL = 2
    FORECAST = 3


class Rng:
    """A reproducible PCG64 random stream."""

    algorithm = "PCG64"

    def __init__(self, seed: int, path: tuple[int, ...] = ()) -> None:
        """Create the stream for ``seed`` at ``path``.

        Raises:
            ValueError: If the seed is outside the unsigned 64-bit range.
        """
        if not 0 <= seed < _MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit int: {seed}")
        self.seed = seed
        self.path = path
        sequence = np.random.SeedSequence(seed, spawn_key=path)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

    def substream(self, index: int) -> "Rng":
        """Derive the independent child stream number ``index``.

        Returns:
            A new stream; this stream's state is not advanced.
        """
        return Rng(self.seed, (*self.path, int(index)))

    def random(self, shape: Shape) -> FloatArray:  # noqa: D102
        return self._generator.random(shape)

    def uniform(self, low: float, high: float, shape: Shape) -> FloatArray:  # noqa: D102
        return self._generator.uniform(low, high, shape)

    def normal(self, scale: float, shape: Shape) -> FloatArray:  # noqa: D102
        return self._generator.normal(0.0, scale, shape)

    def keep_mask(self, keep_prob: float, shape: Shape) -> FloatArray:
        """Bernoulli(keep_prob) mask of zeros and ones.

        Returns:
            A float array of 0.0/1.0 values.
        """
        return (self._generator.random(shape) < keep_prob).astype(np.float64)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:  # noqa: D102
        return self._generator.permutation(n)

    def integer(self, high: int) -> int:
        """Uniform integer in ``[0, high)``.

        Returns:
            The drawn integer.
        """
        return int(self._generator.integers(0, high))
