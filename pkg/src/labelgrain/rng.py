"""Seeded random streams.

Every stream is a numpy ``Generator`` over the PCG64 bit generator, whose
output is specified bit-for-bit and identical across platforms. Sub-seeds are
derived from a master seed and a path of labels with BLAKE2b::

    derive_seed(master, "pair", "init")
      = int.from_bytes(blake2b(b"<master>/pair/init", digest_size=8), "little")

so a single master seed reproduces an entire experiment.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *path: object) -> int:
    key = "/".join([str(int(master))] + [str(p) for p in path]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def make_rng(seed: int, *path: object) -> np.random.Generator:
    """Generator for ``seed`` (or for the sub-seed at ``path`` when given)."""
    if path:
        seed = derive_seed(seed, *path)
    return np.random.Generator(np.random.PCG64(int(seed)))
