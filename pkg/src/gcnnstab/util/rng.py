"""
Counter-based random streams.

Every random draw in gcnnstab is addressed by (seed, purpose, indices)
instead of coming from shared mutable generator state. The stream is a
Philox generator: the key holds the seed and the purpose, the 256-bit
counter is positioned by up to three indices (e.g. draw index, chain
index, chain position). Word 0 of the counter is left at zero and
advances while the stream is consumed, so streams never overlap.

This makes sampling reproducible regardless of evaluation order or the
number of worker threads.
"""

from enum import IntEnum

import numpy as np

_U64 = 0xFFFF_FFFF_FFFF_FFFF
_MAX_INDICES = 3


class Purpose(IntEnum):
    """Stream namespaces, one per kind of randomness."""

    EDGES = 1
    LIPSCHITZ = 2
    REFINE = 3
    INIT = 4
    SHUFFLE = 5
    DATASET = 6
    SIGNAL = 7
    RESPONSE = 8


def counter_stream(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """
    Create the generator addressed by (seed, purpose, indices).

    Args:
        seed: User seed (reduced modulo 2**64)
        purpose: Stream namespace, usually a Purpose member
        indices: Up to three non-negative integers positioning the counter

    Returns:
        numpy Generator backed by Philox
    """
    if len(indices) > _MAX_INDICES:
        raise ValueError(f"At most {_MAX_INDICES} stream indices are supported")
    if any(i < 0 for i in indices):
        raise ValueError(f"Stream indices must be non-negative: {indices}")

    words = [int(i) & _U64 for i in indices]
    words += [0] * (_MAX_INDICES - len(words))
    counter = np.array([0, *words], dtype=np.uint64)
    key = np.array([int(seed) & _U64, int(purpose) & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
