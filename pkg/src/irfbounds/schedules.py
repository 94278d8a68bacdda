"""Contraction / Lipschitz coefficient sequences (rho_n, tau_n, xi_n).

Three asymptotic regimes drive every bound in the package:

* ``C15``: rho_n <= 1 - rho/n^alpha and max(xi_n, tau_n) <= eta/n^alpha, alpha in [0, 1)
* ``C16``: rho_n <= 1 - rho/n^alpha and max(xi_n, tau_n) <= eta,         alpha in (0, 1)
* ``C17``: rho_n <= rho             and max(xi_n, tau_n) <= eta/n^alpha, alpha in (0, 1]

Sequences are indexed by n >= 2 (the chain recursion starts at n = 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = ["Regime", "Schedule", "ScheduleError", "make_schedule", "eval_schedule"]

# slack for validating user sequences against regime inequalities
_TOL = 1e-12


class ScheduleError(ValueError):
    pass


class Regime(str, Enum):
    C15 = "C15"
    C16 = "C16"
    C17 = "C17"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class Schedule:
    regime: Regime
    alpha: Optional[float] = None
    rho: Optional[float] = None
    eta: Optional[float] = None
    custom_rho: Optional[tuple] = None
    custom_tau: Optional[tuple] = None
    custom_xi: Optional[tuple] = None
    with_xi: bool = True

    @property
    def is_custom(self) -> bool:
        return self.custom_rho is not None

    @property
    def horizon(self) -> Optional[int]:
        """Largest n that can be evaluated (None for closed-form schedules)."""
        if not self.is_custom:
            return None
        return len(self.custom_rho) + 1

    def sequences(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (rho_k, tau_k, xi_k) for k = 2..n."""
        if n < 2:
            raise ScheduleError(f"n must be >= 2, got {n}")
        if self.is_custom:
            if n > self.horizon:
                raise ScheduleError(
                    f"custom schedule defined up to n={self.horizon}, requested n={n}"
                )
            m = n - 1
            return (
                np.asarray(self.custom_rho[:m], dtype=float),
                np.asarray(self.custom_tau[:m], dtype=float),
                np.asarray(self.custom_xi[:m], dtype=float),
            )
        k = np.arange(2, n + 1, dtype=float)
        power = k**self.alpha
        if self.regime is Regime.C15:
            rho = np.maximum(1.0 - self.rho / power, 0.0)
            tau = self.eta / power
        elif self.regime is Regime.C16:
            rho = np.maximum(1.0 - self.rho / power, 0.0)
            tau = np.full_like(k, self.eta)
        else:
            rho = np.full_like(k, self.rho)
            tau = self.eta / power
        xi = tau.copy() if self.with_xi else np.zeros_like(tau)
        return rho, tau, xi

    def eval(self, n: int) -> tuple[float, float, float]:
        rho, tau, xi = self.sequences(n)
        return float(rho[-1]), float(tau[-1]), float(xi[-1])

    def to_dict(self) -> dict:
        out = {"regime": self.regime.value}
        for key in ("alpha", "rho", "eta"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.is_custom:
            out["custom_rho"] = list(self.custom_rho)
            out["custom_tau"] = list(self.custom_tau)
            out["custom_xi"] = list(self.custom_xi)
        if not self.with_xi:
            out["with_xi"] = False
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        custom = None
        if "custom_rho" in data:
            custom = (data["custom_rho"], data["custom_tau"], data.get("custom_xi"))
        return make_schedule(
            data["regime"],
            alpha=data.get("alpha"),
            rho=data.get("rho"),
            eta=data.get("eta"),
            custom=custom,
            with_xi=data.get("with_xi", True),
        )


def _check_params(regime: Regime, alpha, rho, eta) -> None:
    if alpha is None or rho is None or eta is None:
        raise ScheduleError(f"regime {regime.value} needs alpha, rho and eta")
    if regime is Regime.C15 and not 0.0 <= alpha < 1.0:
        raise ScheduleError(f"C15 requires alpha in [0, 1), got alpha={alpha}")
    if regime is Regime.C16 and not 0.0 < alpha < 1.0:
        raise ScheduleError(f"C16 requires alpha in (0, 1), got alpha={alpha}")
    if regime is Regime.C17 and not 0.0 < alpha <= 1.0:
        raise ScheduleError(f"C17 requires alpha in (0, 1], got alpha={alpha}")
    if not 0.0 < rho < 1.0:
        raise ScheduleError(f"{regime.value} requires rho in (0, 1), got rho={rho}")
    if not eta > 0.0:
        raise ScheduleError(f"{regime.value} requires eta > 0, got eta={eta}")


def _validate_custom(regime: Regime, alpha, rho, eta, r, t, x) -> None:
    if len(r) == 0:
        raise ScheduleError("custom sequences must be nonempty")
    if not (len(r) == len(t) == len(x)):
        raise ScheduleError("custom rho, tau, xi must have equal length")
    if np.any(~np.isfinite(r)) or np.any(~np.isfinite(t)) or np.any(~np.isfinite(x)):
        raise ScheduleError("custom sequences must be finite")
    if np.any(r < 0.0) or np.any(r >= 1.0):
        n = int(np.argmax((r < 0.0) | (r >= 1.0))) + 2
        raise ScheduleError(f"rho_n must lie in [0, 1); violated at n={n} (rho_n={r[n - 2]})")
    if np.any(t < 0.0):
        raise ScheduleError(f"tau_n must be >= 0; violated at n={int(np.argmax(t < 0)) + 2}")
    if np.any(x < 0.0):
        raise ScheduleError(f"xi_n must be >= 0; violated at n={int(np.argmax(x < 0)) + 2}")
    if regime is Regime.CUSTOM:
        return
    k = np.arange(2, len(r) + 2, dtype=float)
    power = k**alpha
    if regime in (Regime.C15, Regime.C16):
        rho_cap = np.maximum(1.0 - rho / power, 0.0)
        rho_text = "rho_n <= 1 - rho/n^alpha"
    else:
        rho_cap = np.full_like(k, rho)
        rho_text = "rho_n <= rho"
    if regime is Regime.C16:
        cap = np.full_like(k, eta)
        cap_text = "max(xi_n, tau_n) <= eta"
    else:
        cap = eta / power
        cap_text = "max(xi_n, tau_n) <= eta/n^alpha"
    bad = r > rho_cap + _TOL
    if np.any(bad):
        n = int(np.argmax(bad)) + 2
        raise ScheduleError(f"{regime.value}: {rho_text} violated at n={n}")
    bad = np.maximum(t, x) > cap * (1 + _TOL) + _TOL
    if np.any(bad):
        n = int(np.argmax(bad)) + 2
        raise ScheduleError(f"{regime.value}: {cap_text} violated at n={n}")


def make_schedule(
    regime,
    alpha: Optional[float] = None,
    rho: Optional[float] = None,
    eta: Optional[float] = None,
    custom: Optional[tuple[Sequence[float], Sequence[float], Optional[Sequence[float]]]] = None,
    with_xi: bool = True,
) -> Schedule:
    """Build a schedule.

    Without ``custom`` the regime inequalities are taken with equality
    (rho_n clamped at 0). With ``custom = (rho_seq, tau_seq, xi_seq)`` the
    sequences, indexed from n = 2, are validated against the claimed regime;
    ``regime="Custom"`` only checks the basic ranges.
    """
    regime = Regime(regime)
    if custom is None:
        if regime is Regime.CUSTOM:
            raise ScheduleError("regime Custom requires explicit sequences")
        _check_params(regime, alpha, rho, eta)
        return Schedule(regime, float(alpha), float(rho), float(eta), with_xi=with_xi)

    r, t, x = custom
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    x = np.zeros_like(t) if x is None else np.asarray(x, dtype=float)
    if regime is not Regime.CUSTOM:
        _check_params(regime, alpha, rho, eta)
    _validate_custom(regime, alpha, rho, eta, r, t, x)
    as_float = lambda v: None if v is None else float(v)  # noqa: E731
    return Schedule(
        regime,
        as_float(alpha),
        as_float(rho),
        as_float(eta),
        tuple(r.tolist()),
        tuple(t.tolist()),
        tuple(x.tolist()),
    )


def eval_schedule(s: Schedule, n: int) -> tuple[float, float, float]:
    return s.eval(n)
