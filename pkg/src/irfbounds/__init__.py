"""Deviation and moment bounds for contractive iterated random functions,
with Monte-Carlo and exact-enumeration checks."""

from .coefficients import BoundKind, CoefficientTable, MomentConstants, compute_K
from .schedules import Regime, Schedule, make_schedule

__all__ = [
    "BoundKind",
    "CoefficientTable",
    "MomentConstants",
    "Regime",
    "Schedule",
    "compute_K",
    "make_schedule",
]

__version__ = "0.1.0"
