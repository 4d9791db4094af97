"""Deterministic RNG streams keyed by (seed, tag)."""

from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, tag: str, *extra: int) -> np.random.Generator:
    """Independent generator for one named use of a run seed.

    The tag is folded in through crc32, not ``hash()``, so the stream does
    not depend on interpreter hash randomization.
    """
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode("utf-8")), *(int(e) for e in extra)])
    return np.random.default_rng(ss)
