"""Deterministic random streams keyed by (seed, stream_id).

Philox is counter-based, so distinct (seed, stream_id) keys give
statistically independent streams without jump-ahead bookkeeping.  A batch
run assigns stream_id = path index; the variate sequence of a path then
depends only on its key and the fixed draw order, never on scheduling,
worker count, or batch size.
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox4x64"


def _ncount(size) -> int:
    if size is None:
        return 1
    if np.isscalar(size):
        return int(size)
    return int(np.prod(size))


class RandomStream:
    """A replayable variate source.

    seed and stream_id identify the stream; counter tracks how many scalar
    variates have been drawn (diagnostic only, it is not generator state).
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) % 2**64
        self.stream_id = int(stream_id) % 2**64
        self.counter = 0
        # Philox accepts exactly two 64-bit words in array-key form
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return "RandomStream(seed=%d, stream_id=%d, counter=%d)" % (
            self.seed, self.stream_id, self.counter)

    def uniform(self, size=None):
        """Uniform variates on [0, 1)."""
        self.counter += _ncount(size)
        return self._gen.random(size)

    def normal(self, size=None):
        self.counter += _ncount(size)
        return self._gen.standard_normal(size)

    def exponential(self, size=None):
        self.counter += _ncount(size)
        return self._gen.standard_exponential(size)


def batch_stream(base_seed, path_index):
    """Stream for one path of a batch: stream_id is the global path index."""
    return RandomStream(base_seed, path_index)
