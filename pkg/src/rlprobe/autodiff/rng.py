"""Counter-based random streams.

Streams are Philox generators addressed by ``(seed, *keys)``; the same address
always yields the same sequence, independent of how many other streams exist or
which thread consumes them.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def substream(rng: np.random.Generator, *keys) -> np.random.Generator:
    """Derive a child stream from ``rng`` without consuming any of its draws."""
    ss = rng.bit_generator.seed_seq
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(child))
