"""Deterministic seed derivation.

All randomness comes from numpy ``Generator(PCG64)`` streams whose 64-bit seeds
are derived from ``(master_seed, index, tag)`` with BLAKE2b.
"""
from __future__ import annotations

import hashlib

import numpy as np

PRNG_NAME = "numpy.random.Generator(PCG64)"


def derive_subseed(master_seed: int, instance_index: int, stream_tag: str) -> int:
    key = f"{int(master_seed)}/{int(instance_index)}/{stream_tag}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def make_rng(master_seed: int, instance_index: int, stream_tag: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_subseed(master_seed, instance_index, stream_tag)))


def make_rngs(master_seed: int, indices, stream_tag: str) -> list[np.random.Generator]:
    return [make_rng(master_seed, i, stream_tag) for i in indices]
