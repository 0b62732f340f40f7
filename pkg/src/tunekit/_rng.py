"""Deterministic seed derivation for every stochastic operation.

Sub-seeds are SHA-256(base seed, purpose tag, indices) truncated to 64 bits
and fed to PCG64.  Any task in a pipeline (a bootstrap resample, a fold fit,
a replication) owns its stream, so results do not depend on the order or
concurrency in which tasks run, and built-in ``hash()`` (which is salted per
process) is never involved.
"""

from __future__ import annotations

import hashlib

import numpy as np


def sub_seed(seed: int, tag: str, *indices: int) -> int:
    """Derive a 64-bit sub-seed from a base seed, a purpose tag, and indices."""
    text = "|".join([str(int(seed)), tag, *(str(int(i)) for i in indices)])
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """PCG64 generator seeded with ``sub_seed(seed, tag, *indices)``."""
    return np.random.Generator(np.random.PCG64(sub_seed(seed, tag, *indices)))
