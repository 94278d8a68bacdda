"""Propagation weights K_{k,n} and the constants feeding each tail bound.

K_{k,n} = 1 + rho_{k+1} + rho_{k+1} rho_{k+2} + ... + rho_{k+1}...rho_n, with
K_{n,n} = 1. A perturbation of the state at step k moves the separately
Lipschitz functional by at most K_{k,n} times its size; every martingale
increment is therefore dominated by K_{k,n} [tau_k G_eps(eps_k) + xi_k].
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

import numpy as np

from .schedules import Regime, Schedule

__all__ = [
    "CoefficientTable",
    "BoundKind",
    "BoundConstants",
    "MomentConstants",
    "MissingConstantError",
    "compute_K",
    "constants_bernstein",
    "constants_semiexp",
    "constants_fuk_nagaev",
    "constants_vbe",
    "constants_weak",
    "weak_constant",
    "constants_mcdiarmid",
    "constants_hoeffding",
    "constants_mz",
    "constants_vbe_moment",
    "log_product_bound",
    "AsymptoticsReport",
    "asymptotics_report",
]


class MissingConstantError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientTable:
    """K_{k,n} for k = 1..n (``K[k-1]``) with the schedule values for k = 2..n."""

    n: int
    K: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    xi: np.ndarray
    schedule: Optional[Schedule] = None

    @property
    def K1n(self) -> float:
        return float(self.K[0])

    @property
    def K_tail(self) -> np.ndarray:
        """K_{k,n} for k = 2..n, aligned with ``tau`` and ``xi``."""
        return self.K[1:]

    def K_at(self, k: int) -> float:
        if not 1 <= k <= self.n:
            raise IndexError(f"k must lie in [1, {self.n}]")
        return float(self.K[k - 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "K_kn", "tau_k", "xi_k", "rho_k"])
        w.writerow([1, repr(float(self.K[0])), "", "", ""])
        for i in range(self.n - 1):
            w.writerow(
                [
                    i + 2,
                    repr(float(self.K[i + 1])),
                    repr(float(self.tau[i])),
                    repr(float(self.xi[i])),
                    repr(float(self.rho[i])),
                ]
            )
        return buf.getvalue()


def compute_K(s: Schedule, n: int) -> CoefficientTable:
    """Backward recurrence K_{k,n} = 1 + rho_{k+1} K_{k+1,n}, K_{n,n} = 1."""
    rho, tau, xi = s.sequences(n)
    K = np.empty(n)
    K[n - 1] = 1.0
    # rho[j] holds rho_{j+2}; K_{k,n} uses rho_{k+1} = rho[k-1]
    for k in range(n - 1, 0, -1):
        K[k - 1] = 1.0 + rho[k - 1] * K[k]
    return CoefficientTable(n=n, K=K, rho=rho, tau=tau, xi=xi, schedule=s)


class BoundKind(str, Enum):
    BERNSTEIN = "Bernstein"
    SEMIEXP = "SemiExp"
    FUK_NAGAEV = "FukNagaev"
    VBE = "VBE"
    WEAK = "WeakMoment"
    MCDIARMID = "McDiarmid"
    HOEFFDING = "Hoeffding"
    MZ = "MZ"
    VBE_MOMENT = "VBEMoment"


@dataclass(frozen=True)
class BoundConstants:
    kind: BoundKind
    n: int
    V2: Optional[float] = None
    delta: Optional[float] = None
    D: Optional[float] = None
    Hq: Optional[float] = None
    Vq: Optional[float] = None
    Bq: Optional[float] = None
    Tq: Optional[float] = None
    q: Optional[float] = None


def _qkey(q: float) -> float:
    return round(float(q), 9)


@dataclass(frozen=True)
class MomentConstants:
    """Moment hypotheses on the dominating variables G_eps(eps) and G_X1(X1).

    ``noise_moments[q]`` bounds E[G_eps^q] (used for B1(q) in the Fuk-Nagaev
    bound, A1(q) in the von Bahr-Esseen bound and B2(q)/A2(q) in the moment
    bounds). ``init_moments[q]`` bounds E[G_X1^q]. The moment bounds
    conventionally index the initial-state constant 1 and the noise constant
    2, which clashes with the deviation bounds; here they are kept apart by
    name instead.
    """

    H1: Optional[float] = None
    A1: Optional[float] = None
    T: Optional[float] = None
    T1: Optional[float] = None
    A1_semi: Optional[float] = None
    Eexp_q: Optional[float] = None
    semi_q: Optional[float] = None
    noise_moments: Mapping[float, float] = field(default_factory=dict)
    weak_moments: Mapping[float, float] = field(default_factory=dict)
    init_moments: Mapping[float, float] = field(default_factory=dict)
    init_tail: Any = None
    estimated: bool = False

    def __post_init__(self):
        for name in ("H1", "A1", "T", "T1", "A1_semi", "Eexp_q"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        for name in ("noise_moments", "weak_moments", "init_moments"):
            table = {_qkey(q): float(v) for q, v in getattr(self, name).items()}
            floor = 0.0 if name == "init_moments" else None
            for q, v in table.items():
                if floor is None and not v > 0:
                    raise ValueError(f"{name}[{q}] must be > 0, got {v}")
                if v < 0:
                    raise ValueError(f"{name}[{q}] must be >= 0, got {v}")
            object.__setattr__(self, name, table)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingConstantError(f"missing moment constants: {', '.join(missing)}")

    def noise_moment(self, q: float) -> float:
        try:
            return self.noise_moments[_qkey(q)]
        except KeyError:
            raise MissingConstantError(f"no bound on E[G_eps^q] for q={q}") from None

    def weak_moment(self, q: float) -> float:
        try:
            return self.weak_moments[_qkey(q)]
        except KeyError:
            raise MissingConstantError(f"no weak-moment bound for q={q}") from None

    def init_moment(self, q: float) -> float:
        try:
            return self.init_moments[_qkey(q)]
        except KeyError:
            raise MissingConstantError(f"no bound on E[G_X1^q] for q={q}") from None


def constants_bernstein(table: CoefficientTable, mc: MomentConstants) -> BoundConstants:
    mc.require("H1", "A1")
    K, tau, xi = table.K_tail, table.tau, table.xi
    V2 = (1.0 + mc.A1) * float(np.sum((2.0 * K * (tau + xi)) ** 2))
    delta = float(np.max(2.0 * K * (tau * mc.H1 + xi)))
    return BoundConstants(BoundKind.BERNSTEIN, table.n, V2=V2, delta=delta)


def constants_semiexp(table: CoefficientTable, mc: MomentConstants, q: float) -> BoundConstants:
    if not 0.0 < q < 1.0:
        raise ValueError(f"semi-exponential bound needs q in (0, 1), got {q}")
    mc.require("A1_semi", "Eexp_q")
    K, tau, xi = table.K_tail, table.tau, table.xi
    V2 = 2.0 * math.e * float(np.sum(K**2 * (tau**2 * mc.A1_semi + xi**2 * mc.Eexp_q)))
    delta = float(max(np.max(K * tau), np.max(K * xi)))
    return BoundConstants(BoundKind.SEMIEXP, table.n, V2=V2, delta=delta, q=q)


def constants_fuk_nagaev(
    table: CoefficientTable, mc: MomentConstants, q: float
) -> BoundConstants:
    if q < 2.0:
        raise ValueError(f"Fuk-Nagaev bound needs q >= 2, got {q}")
    mc.require("A1")
    B1q = mc.noise_moment(q)
    K, tau, xi = table.K_tail, table.tau, table.xi
    V2 = 2.0 * float(np.sum(K**2 * (tau**2 * mc.A1 + xi**2)))
    Hq = 2.0 ** (q - 1.0) * float(np.sum(K**q * (tau**q * B1q + xi**q)))
    return BoundConstants(BoundKind.FUK_NAGAEV, table.n, V2=V2, Hq=Hq, q=q)


def constants_vbe(table: CoefficientTable, mc: MomentConstants, q: float) -> BoundConstants:
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"von Bahr-Esseen bound needs q in [1, 2], got {q}")
    A = mc.noise_moment(q)
    K, tau, xi = table.K_tail, table.tau, table.xi
    terms = K**q * (tau**q * A + xi**q)
    Vq = 2.0 ** (q - 1.0) * (float(terms[0]) + 2.0 ** (2.0 - q) * float(np.sum(terms[1:])))
    return BoundConstants(BoundKind.VBE, table.n, Vq=Vq, q=q)


def weak_constant(d: int, q: float) -> float:
    """C_{d,q} = 2^{2+q} d (q/(q-1) + 2/(2-q))."""
    if not 1.0 < q < 2.0:
        raise ValueError(f"weak-moment constant diverges unless q in (1, 2), got {q}")
    return 2.0 ** (2.0 + q) * d * (q / (q - 1.0) + 2.0 / (2.0 - q))


def constants_weak(table: CoefficientTable, mc: MomentConstants, q: float) -> BoundConstants:
    if not 1.0 < q < 2.0:
        raise ValueError(f"weak-moment bound needs q strictly inside (1, 2), got {q}")
    A = mc.weak_moment(q)
    K, tau, xi = table.K_tail, table.tau, table.xi
    Bq = float(np.sum((2.0 * K) ** q * (tau**q * A + xi**q)))
    return BoundConstants(BoundKind.WEAK, table.n, Bq=Bq, q=q)


def constants_mcdiarmid(table: CoefficientTable, mc: MomentConstants) -> BoundConstants:
    mc.require("T1")
    ranges = table.K_tail * (table.tau * mc.T1 + table.xi)
    return BoundConstants(
        BoundKind.MCDIARMID,
        table.n,
        V2=float(np.sum(ranges**2)),
        D=float(np.sum(ranges)),
    )


def constants_hoeffding(table: CoefficientTable, mc: MomentConstants) -> BoundConstants:
    mc.require("A1")
    K, tau, xi = table.K_tail, table.tau, table.xi
    V2 = 2.0 * float(np.sum(K**2 * (tau**2 * mc.A1 + xi**2)))
    delta = float(max(np.max(K * tau), np.max(K * xi)))
    return BoundConstants(BoundKind.HOEFFDING, table.n, V2=V2, delta=delta)


def constants_mz(table: CoefficientTable, mc: MomentConstants, q: float) -> BoundConstants:
    if q < 2.0:
        raise ValueError(f"Marcinkiewicz-Zygmund bound needs q >= 2, got {q}")
    B1 = mc.init_moment(q)
    B2 = mc.noise_moment(q)
    K, tau, xi = table.K_tail, table.tau, table.xi
    Tq = table.K1n**2 * B1 ** (2.0 / q) + (q - 1.0) * 2.0 ** (2.0 - 2.0 / q) * float(
        np.sum(K**2 * (tau**q * B2 + xi**q) ** (2.0 / q))
    )
    return BoundConstants(BoundKind.MZ, table.n, Tq=Tq, q=q)


def constants_vbe_moment(
    table: CoefficientTable, mc: MomentConstants, q: float
) -> BoundConstants:
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"von Bahr-Esseen moment bound needs q in [1, 2], got {q}")
    A1 = mc.init_moment(q)
    A2 = mc.noise_moment(q)
    K, tau, xi = table.K_tail, table.tau, table.xi
    Vq = table.K1n**q * A1 + 2.0 * float(np.sum(K**q * (tau**q * A2 + xi**q)))
    return BoundConstants(BoundKind.VBE_MOMENT, table.n, Vq=Vq, q=q)


def log_product_bound(rho: float, alpha: float, k: int, l: int) -> float:
    """Upper bound on ln(rho_{k+1} ... rho_{k+l}) when rho_i <= 1 - rho/i^alpha.

    Each factor satisfies ln rho_i <= -rho i^{-alpha} <= -rho (k+l)^{-alpha}.
    """
    return -rho * (l - 1) / (k + l) ** alpha


@dataclass
class AsymptoticsReport:
    regime: Regime
    n_grid: list
    K1n: list
    statistic: list
    statistic_name: str
    log_product_ok: bool
    log_product_checked: int

    def ratio_range(self, values=None) -> tuple[float, float]:
        v = np.asarray(self.statistic if values is None else values, dtype=float)
        r = v / v[0]
        return float(r.min()), float(r.max())


def asymptotics_report(s: Schedule, n_grid) -> AsymptoticsReport:
    """Track the quantities that stay bounded under each regime.

    C15: max_k K_{k,n}(tau_k + xi_k); C16: max_k K_{k,n} tau_k / k^alpha;
    C17: max_k K_{k,n} tau_k k^alpha. K_{1,n} is reported for all three.
    """
    if s.regime is Regime.CUSTOM:
        raise ValueError("classify the schedule into C15/C16/C17 before asking for asymptotics")
    n_grid = sorted(int(n) for n in n_grid)
    stats, K1 = [], []
    for n in n_grid:
        table = compute_K(s, n)
        k = np.arange(2, n + 1, dtype=float)
        K = table.K_tail
        if s.regime is Regime.C15:
            stats.append(float(np.max(K * (table.tau + table.xi))))
        elif s.regime is Regime.C16:
            stats.append(float(np.max(K * table.tau / k**s.alpha)))
        else:
            stats.append(float(np.max(K * table.tau * k**s.alpha)))
        K1.append(table.K1n)
    name = {
        Regime.C15: "max_k K_kn (tau_k + xi_k)",
        Regime.C16: "max_k K_kn tau_k / k^alpha",
        Regime.C17: "max_k K_kn tau_k k^alpha",
    }[s.regime]

    # log-product estimate on a deterministic (k, l) lattice
    n_max = n_grid[-1]
    rho_seq, _, _ = s.sequences(n_max)
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho_seq)
    cum = np.concatenate([[0.0], np.cumsum(log_rho)])  # cum[j] = sum_{i=2}^{j+1} ln rho_i
    points = np.unique(np.geomspace(1, max(n_max - 1, 1), 25).astype(int))
    ok, checked = True, 0
    for k in points:
        for l in points:
            if k + l > n_max:
                continue
            # ln(rho_{k+1}...rho_{k+l}) = cum[k+l-1] - cum[k-1]
            actual = cum[k + l - 1] - cum[k - 1]
            if s.regime is Regime.C17:
                bound = l * math.log(s.rho)
            else:
                bound = log_product_bound(s.rho, s.alpha, int(k), int(l))
            checked += 1
            if actual > bound + 1e-9 * max(1.0, abs(bound)):
                ok = False
    return AsymptoticsReport(s.regime, n_grid, K1, stats, name, ok, checked)
