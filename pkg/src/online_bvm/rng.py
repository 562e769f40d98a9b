"""Keyed, counter-based random streams.

A stream is identified by ``(seed, *key)``; the key is folded into a
``SeedSequence`` spawn key driving a Philox generator, so the numbers a
replication sees never depend on how work is scheduled.
"""
import zlib

import numpy as np

PHASES = {
    "data": 1,
    "vb": 2,
    "design": 3,
    "noise": 4,
    "theta": 5,
}


def _key_int(part) -> int:
    if isinstance(part, str):
        return PHASES.get(part, zlib.crc32(part.encode()) + 1000)
    value = int(part)
    if value < 0:
        raise ValueError("stream keys must be non-negative")
    return value


def seed_sequence(seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_int(k) for k in key))


def stream(seed, *key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *key)))
