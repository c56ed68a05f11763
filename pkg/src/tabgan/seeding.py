"""Per-module seed derivation: a single user seed fans out as ``seed + crc32(tag)``."""
import zlib

import numpy as np


def derive_seed(seed: int, tag: str) -> int:
    return (int(seed) + zlib.crc32(tag.encode("utf-8"))) % (2**32)


def rng_for(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))
