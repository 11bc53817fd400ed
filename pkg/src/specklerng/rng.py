"""Seeded, counter-based random streams.

Every random draw in the simulator comes from :func:`stream`, which keys a
Philox generator by ``(seed, *tags)``. Streams are independent of call order
and thread scheduling, so frame ``i`` is the same whether it is rendered
first, last or on another worker.
"""

import hashlib

import numpy as np


def _tag_to_int(tag):
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"stream tags must be non-negative, got {tag}")
        return int(tag)
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(seed, *tags):
    """Return a ``numpy.random.Generator`` for the named substream.

    Parameters
    ----------
    seed : int
        Non-negative 64-bit master seed.
    *tags : int or str
        Substream path, e.g. ``("screen", 2)``.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    seq = np.random.SeedSequence(seed, spawn_key=tuple(_tag_to_int(t) for t in tags))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed, *tags):
    """A 63-bit integer seed for the named substream (for nested seeding)."""
    return int(stream(seed, *tags).integers(0, 2**63))
