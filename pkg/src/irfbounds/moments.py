"""Bounds on E||S_n||_q."""

from __future__ import annotations

import math

__all__ = ["mz_moment_bound", "vbe_moment_bound"]


def mz_moment_bound(Tq: float, d: int, q: float) -> float:
    """Marcinkiewicz-Zygmund type bound d^(1/q) sqrt(T_n(q)), q >= 2."""
    if q < 2.0:
        raise ValueError(f"q must be >= 2, got {q}")
    if Tq < 0:
        raise ValueError("Tq must be >= 0")
    return d ** (1.0 / q) * math.sqrt(Tq)


def vbe_moment_bound(Vq: float, d: int, q: float) -> float:
    """von Bahr-Esseen type bound (d V_n(q))^(1/q), q in [1, 2]."""
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    if Vq < 0:
        raise ValueError("Vq must be >= 0")
    return (d * Vq) ** (1.0 / q)
