"""Deterministic RNG streams derived from one master seed.

Every source of randomness in the simulator (fading, receiver noise,
projection signs, mini-batch shuffles, placement, partitions) pulls an
independent generator keyed by a (purpose, index...) path, so adding or
removing one consumer never perturbs any other stream.
"""

import zlib

import numpy as np

__all__ = ["substream"]


def _as_word(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream path indices must be nonnegative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    raise TypeError(f"stream path element must be int or str, got {type(part).__name__}")


def substream(seed, *path):
    """Return an independent ``numpy`` generator for (seed, *path).

    The same (seed, path) always yields an identical stream; distinct paths
    yield statistically independent ones.
    """
    key = tuple(_as_word(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
