"""Seeded random streams.

All randomness in the library flows through PCG64 generators obtained from
:func:`stream`.  A stream is identified by a 64-bit seed plus a sequence of
purpose tags (strings or integers), so dataset generation, per-worker sketch
randomness, and merge subsampling never alias each other even when they share
the user-facing seed.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_words(tag: int | str) -> tuple[int, ...]:
    if isinstance(tag, str):
        return (zlib.crc32(tag.encode("utf-8")),)
    v = int(tag) & _MASK64
    return (v & 0xFFFFFFFF, (v >> 32) & 0xFFFFFFFF)


def stream(seed: int, *tags: int | str) -> np.random.Generator:
    """Return a PCG64 generator for the (seed, *tags) stream.

    Identical arguments always yield a generator producing the identical
    sequence; distinct tag tuples yield statistically independent streams.
    """
    words: list[int] = []
    for tag in tags:
        words.extend(_tag_words(tag))
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(words))
    return np.random.Generator(np.random.PCG64(ss))
