"""Named, reproducible random streams derived from one 64-bit seed.

Each stream is a Philox generator keyed by the seed and a hash of a stable
name, so adding a new stream never shifts the numbers drawn by another.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 20240601


def _name_words(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Generator for the sub-stream ``name`` (optionally indexed) of ``seed``."""
    seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *_name_words(name), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
