"""Innovation laws and the dominating variable G_eps(y) = E||y - eps'||_p.

Closed forms are used for finite-atom laws, the scalar Gaussian (folded
normal mean) and the scalar uniform. Multivariate continuous laws fall back
to explicit upper bounds on G whose moments are estimated by Monte Carlo and
inflated by three standard errors; those results carry ``estimated=True``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special, stats

__all__ = ["NoiseKind", "NoiseSpec", "Estimate", "lp_norm", "MC_DRAWS"]

MC_DRAWS = 10**6
# relative slack added to quadrature results so they remain upper bounds
_QUAD_SLACK = 1e-9


def lp_norm(x: np.ndarray, p: float, axis: int = -1) -> np.ndarray:
    """p-norm along ``axis``, rescaled by the largest entry so that tiny or
    huge vectors neither underflow nor overflow."""
    x = np.asarray(x, dtype=float)
    scale = np.max(np.abs(x), axis=axis, keepdims=True) if x.size else np.ones_like(x)
    if math.isinf(p):
        return np.squeeze(scale, axis=axis) if x.size else np.zeros(np.delete(x.shape, axis))
    safe = np.where(scale > 0, scale, 1.0)
    with np.errstate(invalid="ignore"):
        out = np.linalg.norm(x / safe, ord=p, axis=axis) * np.squeeze(safe, axis=axis)
    return out


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float = 0.0
    estimated: bool = False


class NoiseKind(str, Enum):
    GAUSSIAN = "GaussianIid"
    UNIFORM_PM1 = "UniformPM1"
    TWO_ATOM = "TwoAtom"
    BOUNDED_UNIFORM = "BoundedUniform"


@dataclass(frozen=True)
class NoiseSpec:
    """``TwoAtom`` puts mass ``pr`` on ``a`` and ``1 - pr`` on ``b``."""

    kind: NoiseKind
    d: int = 1
    sigma: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    pr: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind is NoiseKind.GAUSSIAN and not (self.sigma and self.sigma > 0):
            raise ValueError("Gaussian noise needs sigma > 0")
        if self.kind is NoiseKind.TWO_ATOM:
            if self.d != 1:
                raise ValueError("TwoAtom noise is scalar")
            if self.a is None or self.b is None or self.pr is None or not 0 < self.pr < 1:
                raise ValueError("TwoAtom needs atoms a, b and pr in (0, 1)")
        if self.kind is NoiseKind.BOUNDED_UNIFORM:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError("BoundedUniform needs lo < hi")

    # constructors -------------------------------------------------------
    @classmethod
    def gaussian(cls, sigma: float, d: int = 1) -> "NoiseSpec":
        return cls(NoiseKind.GAUSSIAN, d=d, sigma=sigma)

    @classmethod
    def uniform_pm1(cls, d: int = 1) -> "NoiseSpec":
        return cls(NoiseKind.UNIFORM_PM1, d=d)

    @classmethod
    def two_atom(cls, a: float, b: float, pr: float = 0.5) -> "NoiseSpec":
        return cls(NoiseKind.TWO_ATOM, a=a, b=b, pr=pr)

    @classmethod
    def bounded_uniform(cls, lo: float, hi: float, d: int = 1) -> "NoiseSpec":
        return cls(NoiseKind.BOUNDED_UNIFORM, d=d, lo=lo, hi=hi)

    # basic law ----------------------------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.kind in (NoiseKind.TWO_ATOM, NoiseKind.UNIFORM_PM1)

    @property
    def is_bounded(self) -> bool:
        return self.kind is not NoiseKind.GAUSSIAN

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        shape = (size, self.d)
        if self.kind is NoiseKind.GAUSSIAN:
            return self.sigma * rng.standard_normal(shape)
        if self.kind is NoiseKind.UNIFORM_PM1:
            return np.where(rng.random(shape) < 0.5, 1.0, -1.0)
        if self.kind is NoiseKind.TWO_ATOM:
            return np.where(rng.random(shape) < self.pr, self.a, self.b)
        return rng.uniform(self.lo, self.hi, shape)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Support points (m, d) and probabilities of a finite law."""
        if self.kind is NoiseKind.TWO_ATOM:
            return np.array([[self.a], [self.b]], dtype=float), np.array([self.pr, 1 - self.pr])
        if self.kind is NoiseKind.UNIFORM_PM1:
            if self.d > 16:
                raise ValueError("too many atoms to enumerate")
            pts = np.array(list(itertools.product([-1.0, 1.0], repeat=self.d)))
            return pts, np.full(len(pts), 0.5**self.d)
        raise ValueError(f"{self.kind.value} has no finite support")

    def mean(self) -> np.ndarray:
        if self.kind is NoiseKind.TWO_ATOM:
            return np.array([self.pr * self.a + (1 - self.pr) * self.b])
        if self.kind is NoiseKind.BOUNDED_UNIFORM:
            return np.full(self.d, 0.5 * (self.lo + self.hi))
        return np.zeros(self.d)

    def cov(self) -> np.ndarray:
        if self.kind is NoiseKind.GAUSSIAN:
            v = self.sigma**2
        elif self.kind is NoiseKind.UNIFORM_PM1:
            v = 1.0
        elif self.kind is NoiseKind.TWO_ATOM:
            v = self.pr * (1 - self.pr) * (self.a - self.b) ** 2
        else:
            v = (self.hi - self.lo) ** 2 / 12.0
        return v * np.eye(self.d)

    def diameter(self, p: float) -> float:
        """ess sup ||eps - eps'||_p (infinite for Gaussian noise)."""
        scale = 1.0 if math.isinf(p) else self.d ** (1.0 / p)
        if self.kind is NoiseKind.GAUSSIAN:
            return math.inf
        if self.kind is NoiseKind.UNIFORM_PM1:
            return 2.0 * scale
        if self.kind is NoiseKind.TWO_ATOM:
            return abs(self.a - self.b)
        return (self.hi - self.lo) * scale

    # the dominating function G ------------------------------------------
    def g(self, y, p: float) -> np.ndarray:
        """G_eps(y) = E||y - eps'||_p, exact for finite and scalar laws."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if y.shape[-1] != self.d:
            y = y.reshape(-1, self.d)
        if self.is_finite:
            pts, pr = self.atoms()
            dist = lp_norm(y[:, None, :] - pts[None, :, :], p)
            return dist @ pr
        if self.d == 1:
            t = y[:, 0]
            if self.kind is NoiseKind.GAUSSIAN:
                s = self.sigma
                return s * math.sqrt(2.0 / math.pi) * np.exp(-(t**2) / (2 * s * s)) + t * special.erf(
                    t / (s * math.sqrt(2.0))
                )
            lo, hi = self.lo, self.hi
            L = hi - lo
            inside = ((t - lo) ** 2 + (hi - t) ** 2) / (2 * L)
            return np.where(t < lo, 0.5 * (lo + hi) - t, np.where(t > hi, t - 0.5 * (lo + hi), inside))
        raise NotImplementedError("closed-form G only for finite or scalar laws; use g_mc")

    def g_mc(self, y, p: float, draws: int = MC_DRAWS, seed: int = 0) -> Estimate:
        """Monte-Carlo G_eps(y) with its standard error (any law, single y)."""
        rng = np.random.default_rng(seed)
        y = np.asarray(y, dtype=float).reshape(1, self.d)
        dist = lp_norm(y - self.sample(rng, draws), p)
        return Estimate(float(dist.mean()), float(dist.std(ddof=1) / math.sqrt(draws)), True)

    def _g_upper_samples(self, p: float, draws: int, seed: int) -> np.ndarray:
        """Samples of an a.s. upper bound of G(eps) for multivariate continuous laws."""
        rng = np.random.default_rng(seed)
        eps = self.sample(rng, draws)
        if self.kind is NoiseKind.BOUNDED_UNIFORM and not math.isinf(p):
            # G(y) <= (sum_i E|y_i - U|^p)^{1/p} by Jensen
            L, s = self.hi - self.lo, (eps - self.lo)
            per = (s ** (p + 1) + (L - s) ** (p + 1)) / ((p + 1) * L)
            return per.sum(axis=1) ** (1.0 / p)
        # triangle inequality: G(y) <= ||y - mean||_p + E||eps' - mean||_p
        centred = eps - self.mean()
        norms = lp_norm(centred, p)
        return norms + self._mean_norm_bound(p, norms)

    def _mean_norm_bound(self, p: float, norms: np.ndarray) -> float:
        if self.kind is NoiseKind.GAUSSIAN:
            s, d = self.sigma, self.d
            if math.isinf(p):
                return s * math.sqrt(2.0 * math.log(2.0 * d))
            abs_p = 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
            return s * (d * abs_p) ** (1.0 / p)
        # bounded: E||eps - mean|| <= half-diameter
        return 0.5 * self.diameter(p)

    def g_sup(self, p: float) -> float:
        """ess sup of G(eps); infinite for Gaussian noise."""
        if self.kind is NoiseKind.GAUSSIAN:
            return math.inf
        if self.is_finite:
            pts, _ = self.atoms()
            return float(self.g(pts, p).max())
        L = self.hi - self.lo
        if self.d == 1:
            return L / 2.0
        if math.isinf(p):
            return L
        return L * (self.d / (p + 1.0)) ** (1.0 / p)

    def _scalar_expect(self, fn) -> float:
        """E[fn(G(eps))] for the scalar continuous laws by quadrature."""
        if self.kind is NoiseKind.GAUSSIAN:
            s = self.sigma
            val, _ = integrate.quad(
                lambda t: fn(float(self.g([[t]], 1.0)[0])) * stats.norm.pdf(t, scale=s),
                -np.inf,
                np.inf,
                epsabs=1e-13,
                epsrel=1e-11,
                limit=200,
            )
        else:
            val, _ = integrate.quad(
                lambda t: fn(float(self.g([[t]], 1.0)[0])) / (self.hi - self.lo),
                self.lo,
                self.hi,
                epsabs=1e-13,
                epsrel=1e-11,
            )
        return val * (1.0 + _QUAD_SLACK) + 1e-15

    def _expect(self, fn, p: float, draws: int = MC_DRAWS, seed: int = 12345) -> Estimate:
        if self.is_finite:
            pts, pr = self.atoms()
            return Estimate(float(np.dot(pr, fn(self.g(pts, p)))))
        if self.d == 1:
            return Estimate(self._scalar_expect(fn))
        vals = fn(self._g_upper_samples(p, draws, seed))
        m, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))
        return Estimate(m + 3.0 * se, se, True)

    def g_moment(self, q: float, p: float) -> Estimate:
        """Upper bound on E[G(eps)^q]."""
        return self._expect(lambda g: np.power(g, q), p)

    def g_semi(self, q: float, p: float) -> tuple[Estimate, Estimate]:
        """Upper bounds on E[G^2 exp(G^q)] and E[exp(G^q)]."""
        if not 0.0 < q < 1.0:
            raise ValueError("semi-exponential exponent must lie in (0, 1)")
        a = self._expect(lambda g: np.power(g, 2) * np.exp(np.power(g, q)), p)
        b = self._expect(lambda g: np.exp(np.power(g, q)), p)
        return a, b

    def g_tail(self, y: float, p: float) -> float:
        """P(G(eps) > y), exact for finite and scalar laws."""
        if self.is_finite:
            pts, pr = self.atoms()
            return float(pr[self.g(pts, p) > y].sum())
        if self.d != 1:
            raise NotImplementedError("tail of G only for finite or scalar laws")
        if self.kind is NoiseKind.GAUSSIAN:
            g0 = self.sigma * math.sqrt(2.0 / math.pi)
            if y <= g0:
                return 1.0
            # G is even and increasing in |t|; G(t) >= |t|
            t = optimize.brentq(
                lambda t: float(self.g([[t]], 1.0)[0]) - y, 0.0, y + self.sigma, xtol=1e-14
            )
            return float(2.0 * stats.norm.sf(t, scale=self.sigma))
        L = self.hi - self.lo
        if y < L / 4.0:
            return 1.0
        if y >= L / 2.0:
            return 0.0
        return 1.0 - 2.0 * math.sqrt(L * (y - L / 4.0)) / L

    def bernstein_constants(self, p: float) -> tuple[float, float, bool]:
        """(H1, A1, estimated) with E[G^k] <= k!/2 H1^(k-2) A1 for all k >= 2."""
        if self.is_bounded:
            T = self.g_sup(p)
            A = self.g_moment(2.0, p)
            return T, A.value, A.estimated
        # per-coordinate E|Z|^k <= k!/2 sigma^(k-2) sigma^2, lifted to the
        # p-norm and to G through the reference point y0 = 0
        s, d = self.sigma, self.d
        e = 1.0 if math.isinf(p) else (p + 1.0) / p
        return 2.0 * s * d**e, 4.0 * s * s * d ** (2.0 * e), False
