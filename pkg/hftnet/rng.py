"""
Deterministic random streams.

Every unit of random work (a tree, a bootstrap block, a permutation, a pair
task, a synthetic firm) gets a generator derived from the master seed and a
tuple of labels, so results never depend on execution order or worker count.
Python's built-in hash() is salted per process, hence FNV-1a.
"""

from typing import Union

import numpy as np

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

Part = Union[int, str, bytes]


def _to_bytes(x: Part) -> bytes:
    if isinstance(x, bytes):
        return x
    if isinstance(x, (int, np.integer)):
        return int(int(x) & _MASK64).to_bytes(8, "little", signed=False)
    return str(x).encode("utf-8")


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME64) & _MASK64
    return h


def derive_seed(master: int, *parts: Part) -> int:
    """Mix a master seed with labels into a 64-bit integer, stable across processes."""
    h = _fnv1a64(_to_bytes(master))
    for p in parts:
        h ^= _fnv1a64(_to_bytes(p))
        h = (h * _FNV_PRIME64) & _MASK64
    return h


def child_rng(master: int, *parts: Part) -> np.random.Generator:
    """A numpy Generator deterministically derived from master and parts."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(master, *parts)))
