"""Counter-based random streams.

Every replication gets its own Philox stream keyed by a 64-bit hash of
``(master_seed, replication_index)``. Nothing depends on the order in which
replications are drawn, so results are identical for any worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_id", "stream", "derive_seed"]

_MASK64 = (1 << 64) - 1


def stream_id(master_seed: int, index: int) -> int:
    """64-bit stream identifier for replication ``index``."""
    payload = (int(master_seed) & _MASK64).to_bytes(8, "little") + (int(index) & _MASK64).to_bytes(
        8, "little"
    )
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def stream(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_id(master_seed, index)))


def derive_seed(master_seed: int, label: str) -> int:
    """Sub-seed for an independent purpose (pilot runs, repetitions, ...)."""
    h = hashlib.blake2b(
        (int(master_seed) & _MASK64).to_bytes(8, "little") + label.encode(), digest_size=8
    )
    return int.from_bytes(h.digest(), "little")
