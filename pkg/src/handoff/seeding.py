"""Deterministic seed derivation.

Every stochastic component draws from a generator derived from a master seed
plus a path of (string or int) keys, so independent work items never share a
stream and parallel scheduling cannot change results.
"""
from __future__ import annotations

import zlib

import numpy as np

# Derived seeds stay in the signed-64 range so they survive JSON round trips.
SEED_SPACE = 2**63


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"seed path key must be int or str, got {type(key).__name__}")


def seed_sequence(master: int, *path: int | str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) % SEED_SPACE] + [_key_to_int(k) for k in path])


def derive_rng(master: int, *path: int | str) -> np.random.Generator:
    """Independent generator for the (master, *path) slot."""
    return np.random.default_rng(seed_sequence(master, *path))


def derive_seed(master: int, *path: int | str) -> int:
    """A fresh 63-bit seed usable as a new master for a sub-component."""
    return int(seed_sequence(master, *path).generate_state(1, np.uint64)[0] % SEED_SPACE)
