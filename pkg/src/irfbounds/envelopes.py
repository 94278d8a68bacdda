"""Tail envelopes u -> upper bound on P(||S_n||_p >= u).

Every envelope splits as I1(x) + martingale term, with x = u * d^(-1/p). The
martingale terms are computed in log space; anything below 1e-300 is reported
as exactly 0 and flagged. Totals are clamped to [0, 1] and equal 1 at u = 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from .coefficients import BoundConstants, BoundKind, weak_constant

__all__ = [
    "InitKind",
    "InitialTailSpec",
    "NotApplicableError",
    "BoundEnvelope",
    "i1_term",
    "bernstein_envelope",
    "semiexp_envelope",
    "fuk_nagaev_envelope",
    "vbe_envelope",
    "weak_envelope",
    "ell",
    "ell_star",
    "mcdiarmid_envelope",
    "hoeffding_H",
    "bennett_B",
    "bernstein_B1",
    "hoeffding_envelope",
    "UNDERFLOW",
]

UNDERFLOW = 1e-300
_LOG_UNDERFLOW = math.log(UNDERFLOW)


class NotApplicableError(ValueError):
    """The hypotheses of the requested bound do not hold for these constants."""


class InitKind(str, Enum):
    DETERMINISTIC = "Deterministic"
    EXP = "ExpTail"
    SEMIEXP = "SemiExpTail"
    POLY = "PolyTail"
    BOUNDED = "BoundedDiameter"


@dataclass(frozen=True)
class InitialTailSpec:
    """Tail hypothesis on G_X1(X1), the mean distance of X1 to an independent copy."""

    kind: InitKind = InitKind.DETERMINISTIC
    c: Optional[float] = None
    q: Optional[float] = None
    T0: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.kind in (InitKind.EXP, InitKind.SEMIEXP, InitKind.POLY):
            if self.c is None or not self.c > 0:
                raise ValueError(f"{self.kind.value} needs c > 0")
        if self.kind in (InitKind.SEMIEXP, InitKind.POLY):
            if self.q is None or not self.q > 0:
                raise ValueError(f"{self.kind.value} needs q > 0")
        if self.kind is InitKind.BOUNDED and (self.T0 is None or self.T0 < 0):
            raise ValueError("BoundedDiameter needs T0 >= 0")

    @classmethod
    def deterministic(cls) -> "InitialTailSpec":
        return cls(InitKind.DETERMINISTIC)

    @classmethod
    def exp_tail(cls, c: float) -> "InitialTailSpec":
        return cls(InitKind.EXP, c=c)

    @classmethod
    def semiexp_tail(cls, c: float, q: float) -> "InitialTailSpec":
        return cls(InitKind.SEMIEXP, c=c, q=q)

    @classmethod
    def poly_tail(cls, c: float, q: float) -> "InitialTailSpec":
        return cls(InitKind.POLY, c=c, q=q)

    @classmethod
    def bounded(cls, T0: float) -> "InitialTailSpec":
        return cls(InitKind.BOUNDED, T0=T0)

    @property
    def is_bounded(self) -> bool:
        return self.kind in (InitKind.DETERMINISTIC, InitKind.BOUNDED)


def i1_term(x, K1n: float, d: int, init: InitialTailSpec):
    """d * P(G_X1(X1) >= x / (2 K_{1,n})) under the stated tail hypothesis."""
    x = np.asarray(x, dtype=float)
    z = x / (2.0 * K1n)
    if init.kind is InitKind.DETERMINISTIC:
        out = np.zeros_like(z)
    elif init.kind is InitKind.EXP:
        out = d / init.c * np.exp(-init.c * z)
    elif init.kind is InitKind.SEMIEXP:
        out = d / init.c * np.exp(-init.c * z**init.q)
    elif init.kind is InitKind.POLY:
        with np.errstate(divide="ignore"):
            out = init.c * d * z ** (-init.q)
    else:
        out = np.where(z > init.T0, 0.0, 1.0)
    return out if out.ndim else float(out)


def _exp_flagged(log_v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """exp with values below UNDERFLOW mapped to 0; returns (values, flags)."""
    flag = log_v < _LOG_UNDERFLOW
    with np.errstate(over="ignore"):
        v = np.exp(np.where(flag, 0.0, log_v))
    return np.where(flag, 0.0, v), flag & np.isfinite(log_v)


@dataclass(frozen=True)
class BoundEnvelope:
    """Callable tail bound.

    ``martingale`` maps an array of x >= 0 to (log of the martingale term),
    the quantity bounding d * max_i P(|S_{2,n}^(i)| >= x/2).
    """

    kind: BoundKind
    form: str
    d: int
    p: float
    n: int
    K1n: float
    init: InitialTailSpec
    constants: BoundConstants
    log_martingale: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def x_of(self, u):
        u = np.asarray(u, dtype=float)
        if math.isinf(self.p):
            return u
        return u * self.d ** (-1.0 / self.p)

    def components(self, u) -> dict:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        x = self.x_of(u)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            i1 = np.atleast_1d(i1_term(x, self.K1n, self.d, self.init))
            log_m = np.asarray(self.log_martingale(x), dtype=float)
        mart, flag = _exp_flagged(log_m)
        total = np.clip(i1 + mart, 0.0, 1.0)
        total = np.where(u <= 0.0, 1.0, total)
        return {
            "u": u,
            "x": x,
            "I1": i1,
            "martingale": mart,
            "total": total,
            "underflow": flag,
        }

    def eval(self, u):
        out = self.components(u)["total"]
        return out if np.ndim(u) else float(out[0])

    __call__ = eval

    @property
    def tag(self) -> str:
        return f"{self.kind.value}:{self.form}"

    def to_csv(self, u_grid) -> str:
        c = self.components(u_grid)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "x", "bound_total", "bound_I1", "bound_martingale", "form_tag"])
        for i in range(len(c["u"])):
            w.writerow(
                [
                    repr(float(c["u"][i])),
                    repr(float(c["x"][i])),
                    repr(float(c["total"][i])),
                    repr(float(c["I1"][i])),
                    repr(float(c["martingale"][i])),
                    self.tag,
                ]
            )
        return buf.getvalue()


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def _check_kind(bc: BoundConstants, kind: BoundKind) -> None:
    if bc.kind is not kind:
        raise ValueError(f"expected {kind.value} constants, got {bc.kind.value}")


def _envelope(bc, form, d, p, K1n, init, fn) -> BoundEnvelope:
    return BoundEnvelope(bc.kind, form, int(d), float(p), bc.n, float(K1n), init, bc, fn)


def bernstein_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, form: str = "refined"
) -> BoundEnvelope:
    """``form="refined"``: V^2(1 + sqrt(1 + x delta/V^2)) + delta x/2 in the
    denominator; ``form="relaxed"``: 2V^2 + delta x."""
    _check_kind(bc, BoundKind.BERNSTEIN)
    V2, delta = bc.V2, bc.delta
    log2d = _log(2.0 * d)
    if form not in ("refined", "relaxed"):
        raise ValueError(f"unknown Bernstein form {form!r}")

    def fn(x):
        if form == "refined":
            den = V2 + np.sqrt(V2 * (V2 + x * delta)) + delta * x / 2.0
        else:
            den = 2.0 * V2 + delta * x
        num = (x / 2.0) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(x > 0, np.inf, 0.0))
        return log2d - r

    return _envelope(bc, form, d, p, K1n, init, fn)


def semiexp_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, q: Optional[float] = None
) -> BoundEnvelope:
    _check_kind(bc, BoundKind.SEMIEXP)
    q = bc.q if q is None else q
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    V2, delta = bc.V2, bc.delta
    if V2 < 1.0:
        raise NotApplicableError(f"semi-exponential bound needs V_n >= 1, got V_n = {math.sqrt(V2):.6g}")
    if V2 < delta**2:
        raise NotApplicableError(
            f"semi-exponential bound needs V_n >= delta_n, got V_n = {math.sqrt(V2):.6g}, "
            f"delta_n = {delta:.6g}"
        )
    log4d = _log(4.0 * d)

    def fn(x):
        h = x / 2.0
        return log4d - h**2 / (2.0 * (V2 + h ** (2.0 - q) * delta**q))

    return _envelope(bc, "sens", d, p, K1n, init, fn)


def fuk_nagaev_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, q: Optional[float] = None
) -> BoundEnvelope:
    _check_kind(bc, BoundKind.FUK_NAGAEV)
    q = bc.q if q is None else q
    if q < 2.0:
        raise ValueError(f"Fuk-Nagaev bound needs q >= 2, got {q}")
    Hq, V2 = bc.Hq, bc.V2
    log_poly = _log(2.0 ** (q + 1.0) * d * (1.0 + 2.0 / q) ** q * Hq)
    log2d = _log(2.0 * d)
    scale = 2.0 * (q + 2.0) ** 2 * math.exp(q) * V2

    def fn(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            a = log_poly - q * np.log(x)
            a = np.where(np.isnan(a), -np.inf, a)
            if scale > 0:
                b = log2d - x**2 / scale
            else:
                b = np.where(x > 0, -np.inf, log2d)
        return np.logaddexp(a, b)

    return _envelope(bc, f"q={q:g}", d, p, K1n, init, fn)


def _power_law(log_const: float, q: float):
    def fn(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = log_const - q * np.log(x)
        return np.where(np.isnan(out), -np.inf, out)

    return fn


def vbe_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, q: Optional[float] = None
) -> BoundEnvelope:
    _check_kind(bc, BoundKind.VBE)
    q = bc.q if q is None else q
    fn = _power_law(_log(2.0**q * d * bc.Vq), q)
    return _envelope(bc, f"q={q:g}", d, p, K1n, init, fn)


def weak_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, q: Optional[float] = None
) -> BoundEnvelope:
    _check_kind(bc, BoundKind.WEAK)
    q = bc.q if q is None else q
    fn = _power_law(_log(weak_constant(d, q) * bc.Bq), q)
    return _envelope(bc, f"q={q:g}", d, p, K1n, init, fn)


# --- McDiarmid -------------------------------------------------------------


def ell(t):
    """l(t) = (t - ln t - 1) + t/(e^t - 1) + ln(1 - e^-t), for t > 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        out = t - 1.0 + t / np.expm1(t) + np.log(-np.expm1(-t) / t)
    return out if out.ndim else float(out)


def _ell_star_lower(x: float) -> float:
    return (x * x - 2.0 * x) * math.log1p(-x)


def _ell_star_scalar(x: float) -> float:
    if x < 0:
        raise ValueError("ell_star is defined for x >= 0")
    if x == 0.0:
        return 0.0
    if x >= 1.0:
        return math.inf
    # maximize x t - l(t) over t = e^s
    res = minimize_scalar(
        lambda s: -(x * math.exp(s) - ell(math.exp(s))),
        bounds=(-40.0, 80.0),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    numeric = -float(res.fun)
    # the bounded search can stall on flat stretches; a root of l'(t) = x
    # seeded at the closed-form guess t = 1/(1-x) refines it
    guess = 1.0 / (1.0 - x)
    alt = x * guess - ell(guess)
    return max(numeric, alt, _ell_star_lower(x))


def ell_star(x):
    """Young transform sup_{t>0} (x t - l(t)); +inf for x >= 1."""
    arr = np.asarray(x, dtype=float)
    out = np.vectorize(_ell_star_scalar, otypes=[float])(arr)
    return out if out.ndim else float(out)


def mcdiarmid_envelope(
    bc: BoundConstants, d: int, p: float, K1n: float, init: InitialTailSpec, form: str = "rio"
) -> BoundEnvelope:
    """``form`` is ``"rio"`` (Young transform), ``"power"`` or ``"gauss"``.

    Beyond x = 2 D_n the martingale part is identically zero because each
    |S_{2,n}^(i)| <= D_n pathwise.
    """
    _check_kind(bc, BoundKind.MCDIARMID)
    if not init.is_bounded:
        raise NotApplicableError("McDiarmid bound needs a deterministic or bounded initial state")
    if form not in ("rio", "power", "gauss"):
        raise ValueError(f"unknown McDiarmid form {form!r}")
    D, V2 = bc.D, bc.V2
    log2d = _log(2.0 * d)

    def fn(x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -np.inf)
        if D <= 0.0:
            return np.where(x > 0, -np.inf, log2d)
        inside = x <= 2.0 * D
        xs = x[inside]
        if form == "rio":
            val = log2d - (D * D / V2) * ell_star(xs / (2.0 * D))
        elif form == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                expo = (D * xs - (xs / 2.0) ** 2) / V2
                val = log2d + np.where(expo > 0, expo * np.log1p(-xs / (2.0 * D)), 0.0)
        else:
            val = log2d - xs**2 / (2.0 * V2)
        out[inside] = val
        return out

    return _envelope(bc, form, d, p, K1n, init, fn)


# --- Hoeffding -------------------------------------------------------------


def _log_H(x, v, n):
    x = np.asarray(x, dtype=float)
    v2 = np.asarray(v, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = -(x + v2) * np.log1p(x / v2) - xlogy(n - x, (n - x) / n)
        out = n / (n + v2) * inner
    return np.where(x > n, -np.inf, out)


def hoeffding_H(x, v, n):
    """H_n(x, v), with value 0 for x > n and (+inf)^0 = 1 at x = n."""
    if np.any(np.asarray(v) <= 0):
        raise ValueError("v must be > 0")
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be >= 0")
    out = np.exp(_log_H(x, v, n))
    return out if out.ndim else float(out)


def bennett_B(x, v):
    x = np.asarray(x, dtype=float)
    v2 = np.asarray(v, dtype=float) ** 2
    out = np.exp(-(x + v2) * np.log1p(x / v2) + x)
    return out if out.ndim else float(out)


def bernstein_B1(x, v):
    x = np.asarray(x, dtype=float)
    v2 = np.asarray(v, dtype=float) ** 2
    out = np.exp(-(x**2) / (2.0 * (v2 + x / 3.0)))
    return out if out.ndim else float(out)


def hoeffding_envelope(
    bc: BoundConstants,
    d: int,
    p: float,
    K1n: float,
    init: InitialTailSpec,
    T: Optional[float] = None,
    max_tail: Optional[Callable[[float], float]] = None,
    y_grid=None,
    form: str = "H",
) -> BoundEnvelope:
    """Bounded case (``T`` with G_eps <= T a.s.) or general case.

    In the general case ``max_tail(y)`` must return an upper bound on
    P(max_{2<=k<=n} G_eps(eps_k) > y); for each x the free level y is chosen
    on ``y_grid`` (64 log-spaced points by default) to minimize the bound.
    ``form`` picks H_n, its Bennett relaxation ``"bennett"`` or the
    Bernstein relaxation ``"bernstein"``.
    """
    _check_kind(bc, BoundKind.HOEFFDING)
    if (T is None) == (max_tail is None):
        raise ValueError("give exactly one of T (bounded case) or max_tail (general case)")
    V, delta, n = math.sqrt(bc.V2), bc.delta, bc.n
    log2d = _log(2.0 * d)

    def log_core(x, y):
        if delta <= 0.0:
            return np.where(x > 0, -np.inf, 0.0)
        s = (y + 1.0) * delta
        a, v = x / (2.0 * s), V / s
        if form == "H":
            return _log_H(a, v, n)
        if form == "bennett":
            return -(a + v * v) * np.log1p(a / (v * v)) + a
        if form == "bernstein":
            return -(a**2) / (2.0 * (v * v + a / 3.0))
        raise ValueError(f"unknown Hoeffding form {form!r}")

    if T is not None:

        def fn(x):
            return log2d + log_core(np.asarray(x, dtype=float), T)

        tag = form
    else:
        ys = np.geomspace(1e-2, 1e2, 64) if y_grid is None else np.asarray(y_grid, dtype=float)
        log_tails = np.array([_log(min(1.0, float(max_tail(y)))) for y in ys])

        def fn(x):
            x = np.asarray(x, dtype=float)
            cands = np.stack(
                [np.logaddexp(log_core(x, y), lt) for y, lt in zip(ys, log_tails)]
            )
            return log2d + cands.min(axis=0)

        tag = f"{form}-general"
    return _envelope(bc, tag, d, p, K1n, init, fn)
