"""Seeded random streams.

All randomness derives from one integer seed. Each consumer asks for a labeled
substream, so adding a new consumer never shifts the draws of existing ones.
The bit generator is numpy's PCG64 seeded through ``SeedSequence``.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    key = zlib.crc32(label.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))
