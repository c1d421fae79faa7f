"""Seeded randomness.

Every random draw in the package comes from numpy's ``PCG64`` bit generator
(PCG-XSL-RR 128/64, O'Neill 2014) wrapped in ``numpy.random.Generator``.
Seeds are 64-bit unsigned integers.  Independent stages derive their own
sub-seed from the run seed and a stage name::

    sub_seed = int.from_bytes(sha256(f"{seed}:{stage}".encode())[:8], "little")

so adding a stage never perturbs the stream of another one.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_NAME = "numpy.PCG64"
SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{int(seed) & SEED_MASK}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, stage: str | None = None) -> np.random.Generator:
    """Return a fresh generator for ``seed`` (optionally specialised by ``stage``)."""
    s = int(seed) & SEED_MASK
    if stage is not None:
        s = derive_seed(s, stage)
    return np.random.Generator(np.random.PCG64(s))
