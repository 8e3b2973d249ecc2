"""Labelled RNG streams derived from one root seed.

Each consumer asks for a stream by name, so adding a new consumer never
shifts the draws seen by existing ones.
"""
import zlib

import numpy as np


def derive_rng(seed: int, label: str) -> np.random.Generator:
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
