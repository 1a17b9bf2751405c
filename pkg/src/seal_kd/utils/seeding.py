"""Seeded random streams.

A run owns a single integer seed. Every consumer asks for a named stream, so
adding a new consumer never shifts the draws of an existing one.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for ``name`` derived from ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))
