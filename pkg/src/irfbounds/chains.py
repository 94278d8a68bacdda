"""Contractive chains X_n = F_n(X_{n-1}, eps_n) on R^d with the L^p metric.

Each model knows its step map, the coefficient sequences it implies, and how
to derive valid moment constants for its noise. Noise for one step is a row
of ``noise_width`` numbers: the first ``d`` columns are the innovation that
the metric delta acts on, the remainder are auxiliary uniforms (random
minibatches, random matrix jitter) or, for the subsampled model, further
innovation blocks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable, ClassVar, Optional, Sequence

import numpy as np
from scipy import optimize

from .coefficients import BoundKind, MomentConstants
from .envelopes import InitialTailSpec, NotApplicableError
from .noise import Estimate, NoiseSpec, lp_norm
from .rng import stream
from .schedules import Regime, Schedule, make_schedule

__all__ = [
    "Example",
    "InitSpec",
    "ChainModel",
    "FunctionalAR",
    "UnitRoot",
    "LinearSA",
    "ProjectedLinearSA",
    "LinearSAScaledNoise",
    "LinearSAAdditive",
    "ProjectedSGD",
    "Subsampled",
    "FunctionalKind",
    "FunctionalSpec",
    "ChainFault",
    "make_model",
    "step",
    "simulate",
    "draw_paths",
    "run_paths",
    "g_eps",
    "g_x1",
    "derive_constants",
    "ContractionReport",
    "verify_contraction",
    "mean_path",
    "sum_mean",
    "sum_covariance",
    "trajectory_csv",
]


class ChainFault(RuntimeError):
    pass


class Example(str, Enum):
    FUNCTIONAL_AR = "FunctionalAR"
    UNIT_ROOT = "UnitRoot"
    LINEAR_SA = "LinearSA"
    PROJECTED_LINEAR_SA = "ProjectedLinearSA"
    SCALED_NOISE = "LinearSAScaledNoise"
    ADDITIVE = "LinearSAAdditive"
    PROJECTED_SGD = "ProjectedSGD_SGLD"
    SUBSAMPLED = "Subsampled"


def _norm_p(p: float) -> float:
    return np.inf if math.isinf(p) else p


def _op_norm(M: np.ndarray, p: float) -> float:
    if M.shape == (1, 1):
        return abs(float(M[0, 0]))
    if p in (1, 2) or math.isinf(p):
        return float(np.linalg.norm(M, ord=_norm_p(p)))
    raise ValueError("matrix models support p in {1, 2, inf} for d > 1")


def _project(X: np.ndarray, D: float) -> np.ndarray:
    norms = np.sqrt(np.sum(X * X, axis=1, keepdims=True))
    scale = np.minimum(1.0, D / np.where(norms > 0, norms, 1.0))
    return X * scale


def _matvec(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise M @ x without BLAS so each row is computed identically
    whatever the batch size."""
    return np.sum(X[:, None, :] * M[None, :, :], axis=2)


# ---------------------------------------------------------------------------
# initial states


class InitKind(str, Enum):
    POINT = "point"
    BOX = "box"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class InitSpec:
    """X1 deterministic, uniform in a box ``x1 + [-radius, radius]^d`` or
    Gaussian ``x1 + sd * Z`` with independent coordinates."""

    kind: InitKind
    x1: tuple
    radius: float = 0.0
    sd: float = 0.0

    @classmethod
    def point(cls, x1) -> "InitSpec":
        return cls(InitKind.POINT, tuple(np.atleast_1d(np.asarray(x1, float)).tolist()))

    @classmethod
    def box(cls, center, radius: float) -> "InitSpec":
        if radius <= 0:
            raise ValueError("radius must be > 0")
        return cls(InitKind.BOX, tuple(np.atleast_1d(np.asarray(center, float)).tolist()), radius=radius)

    @classmethod
    def gaussian(cls, mean, sd: float) -> "InitSpec":
        if sd <= 0:
            raise ValueError("sd must be > 0")
        return cls(InitKind.GAUSSIAN, tuple(np.atleast_1d(np.asarray(mean, float)).tolist()), sd=sd)

    @property
    def is_deterministic(self) -> bool:
        return self.kind is InitKind.POINT

    def mean(self) -> np.ndarray:
        return np.asarray(self.x1, dtype=float)

    def cov(self) -> np.ndarray:
        d = len(self.x1)
        if self.kind is InitKind.POINT:
            return np.zeros((d, d))
        v = self.radius**2 / 3.0 if self.kind is InitKind.BOX else self.sd**2
        return v * np.eye(d)

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        m = self.mean()
        if self.kind is InitKind.POINT:
            return np.tile(m, (size, 1))
        if self.kind is InitKind.BOX:
            return m + rng.uniform(-self.radius, self.radius, (size, len(m)))
        return m + self.sd * rng.standard_normal((size, len(m)))

    def _as_noise(self) -> NoiseSpec:
        d = len(self.x1)
        if self.kind is InitKind.BOX:
            return NoiseSpec.bounded_uniform(-self.radius, self.radius, d)
        return NoiseSpec.gaussian(self.sd, d)

    def diameter(self, p: float) -> float:
        if self.kind is InitKind.POINT:
            return 0.0
        return self._as_noise().diameter(p)

    def tail_spec(self, p: float) -> InitialTailSpec:
        if self.kind is InitKind.POINT:
            return InitialTailSpec.deterministic()
        if self.kind is InitKind.BOX:
            return InitialTailSpec.bounded(self.diameter(p))
        if len(self.x1) != 1:
            raise NotApplicableError("Gaussian initial tails are certified for d = 1 only")
        s = self.sd
        m0 = s * math.sqrt(2.0 / math.pi)
        # G(x) <= |x - m| + m0, so P(G >= x) <= 2 exp(-(x - m0)^2 / (2 s^2));
        # c solving -ln(2c) - c m0 - c^2 s^2 / 2 = 0 makes c^-1 e^{-cx} dominate
        c = optimize.brentq(lambda c: -math.log(2 * c) - c * m0 - 0.5 * (c * s) ** 2, 1e-12, 0.5)
        return InitialTailSpec.exp_tail(c * (1 - 1e-12))

    def g(self, x, p: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind is InitKind.POINT:
            return lp_norm(x - self.mean(), p)
        return self._as_noise().g(x - self.mean(), p)

    def moment(self, q: float, p: float) -> Estimate:
        """Upper bound on E[G_X1(X1)^q]."""
        if self.kind is InitKind.POINT:
            return Estimate(0.0)
        return self._as_noise().g_moment(q, p)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ChainModel:
    """Common interface; concrete models subclass this."""

    noise: NoiseSpec
    init: InitSpec
    p: float = 2.0

    example = None  # set by subclasses
    regime: ClassVar[Regime] = Regime.C15
    is_affine = False

    @property
    def d(self) -> int:
        return self.noise.d

    # sequences and classification ----------------------------------------
    def sequences(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def classification(self, n: int) -> tuple[float, float, float]:
        """(alpha, rho, eta) of the regime the sequences satisfy up to n."""
        raise NotImplementedError

    def schedule(self, n: int) -> Schedule:
        r, t, x = self.sequences(n)
        alpha, rho, eta = self.classification(n)
        return make_schedule(self.regime, alpha, rho, eta, custom=(r, t, x))

    def _classify_rho(self, r: np.ndarray, alpha: float) -> float:
        k = np.arange(2, len(r) + 2, dtype=float)
        rho = float(np.min((1.0 - r) * k**alpha)) * (1.0 - 1e-12)
        if not 0.0 < rho:
            raise ValueError(f"{self.example.value}: rho_n >= 1 somewhere, not contractive")
        return min(rho, 1.0 - 1e-12)

    # noise ----------------------------------------------------------------
    @property
    def extra_width(self) -> int:
        return 0

    @property
    def noise_width(self) -> int:
        return self.d + self.extra_width

    def draw_noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        eps = self.noise.sample(rng, n - 1)
        if self.extra_width:
            eps = np.concatenate([eps, rng.random((n - 1, self.extra_width))], axis=1)
        return eps

    def noise_metric(self, W: np.ndarray, W2: np.ndarray) -> np.ndarray:
        return lp_norm(W[:, : self.d] - W2[:, : self.d], self.p)

    def noise_row_mean(self) -> np.ndarray:
        return np.concatenate([self.noise.mean(), np.full(self.extra_width, 0.5)])

    # dynamics ---------------------------------------------------------------
    def step(self, n: int, X: np.ndarray, W: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def affine(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(M, c, N) with F_n(x, w) = M x + c + N w for affine models."""
        raise NotImplementedError(f"{self.example.value} is not affine")

    def probe_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.d) * 2.0

    def g_sup(self) -> float:
        return self.noise.g_sup(self.p)

    def noise_diameter(self) -> float:
        return self.noise.diameter(self.p)


def _sym_pd(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("A must be symmetric")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError("A must be positive definite")
    return A


def _step_norms(A: np.ndarray, h: np.ndarray, p: float) -> np.ndarray:
    """||I - h_k A||_p for each step size h_k."""
    if A.shape == (1, 1):
        return np.abs(1.0 - h * A[0, 0])
    if p == 2:
        lam = np.linalg.eigvalsh(A)
        return np.max(np.abs(1.0 - np.outer(h, lam)), axis=1)
    eye = np.eye(A.shape[0])
    return np.array([_op_norm(eye - hk * A, p) for hk in h])


@dataclass(frozen=True)
class FunctionalAR(ChainModel):
    """X_n = R X_{n-1} + g + eps_n with ||R||_p < 1."""

    R: tuple = ((0.5,),)
    g: tuple = (0.0,)

    example = Example.FUNCTIONAL_AR
    is_affine = True

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, float))
        if R.shape != (self.d, self.d) or len(self.g) != self.d:
            raise ValueError("R must be d x d and g of length d")
        r = _op_norm(R, self.p)
        if not 0.0 < r < 1.0:
            raise ValueError(f"FunctionalAR needs 0 < ||R||_p < 1, got {r}")

    @property
    def rho(self) -> float:
        return _op_norm(np.atleast_2d(np.asarray(self.R, float)), self.p)

    def sequences(self, n):
        m = n - 1
        return np.full(m, self.rho), np.ones(m), np.zeros(m)

    def classification(self, n):
        return 0.0, 1.0 - self.rho, 1.0

    def step(self, n, X, W):
        return _matvec(X, np.asarray(self.R, float)) + np.asarray(self.g, float) + W[:, : self.d]

    def affine(self, n):
        return np.asarray(self.R, float), np.asarray(self.g, float), np.eye(self.d)


@dataclass(frozen=True)
class UnitRoot(ChainModel):
    """Scalar X_n = phi_n X_{n-1} + eps_n with phi_n = 1 - c/n^alpha
    (``variant="linear"``) or 1/(1 + c/n^alpha) (``variant="inverse"``)."""

    c: float = 0.5
    alpha: float = 0.5
    variant: str = "linear"

    example = Example.UNIT_ROOT
    regime = Regime.C16
    is_affine = True

    def __post_init__(self):
        if self.d != 1:
            raise ValueError("UnitRoot is scalar")
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"UnitRoot needs c in (0, 1), got c={self.c}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"UnitRoot needs alpha in (0, 1), got alpha={self.alpha}")
        if self.variant not in ("linear", "inverse"):
            raise ValueError("variant must be 'linear' or 'inverse'")

    def phi(self, n):
        t = self.c / np.asarray(n, dtype=float) ** self.alpha
        return 1.0 - t if self.variant == "linear" else 1.0 / (1.0 + t)

    def sequences(self, n):
        k = np.arange(2, n + 1)
        return self.phi(k), np.ones(n - 1), np.zeros(n - 1)

    def classification(self, n):
        if self.variant == "linear":
            return self.alpha, self.c, 1.0
        # 1/(1+t) = 1 - t/(1+t) <= 1 - (c/(1 + c/2^alpha))/n^alpha for n >= 2
        return self.alpha, self.c / (1.0 + self.c / 2.0**self.alpha), 1.0

    def step(self, n, X, W):
        return self.phi(n) * X + W[:, :1]

    def affine(self, n):
        return np.array([[self.phi(n)]]), np.zeros(1), np.eye(1)


@dataclass(frozen=True)
class _LinearBase(ChainModel):
    A: tuple = ((1.0,),)
    B: tuple = (0.0,)
    gamma: float = 0.5
    alpha: float = 0.0

    is_affine = True

    def __post_init__(self):
        A = _sym_pd(self.A)
        if A.shape[0] != self.d or len(self.B) != self.d:
            raise ValueError("A must be d x d and B of length d")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")

    @property
    def A_mat(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.A, float))

    @property
    def B_vec(self) -> np.ndarray:
        return np.asarray(self.B, float)

    @property
    def lam_min(self) -> float:
        return float(np.linalg.eigvalsh(self.A_mat).min())

    @property
    def lam_max(self) -> float:
        return float(np.linalg.eigvalsh(self.A_mat).max())

    def x_star(self) -> np.ndarray:
        return np.linalg.solve(self.A_mat, self.B_vec)

    def h(self, n):
        return self.gamma / np.asarray(n, dtype=float) ** self.alpha


@dataclass(frozen=True)
class LinearSA(_LinearBase):
    """X_n = X_{n-1} - h_n (A X_{n-1} - B + eps_n), h_n = gamma/n^alpha."""

    example = Example.LINEAR_SA

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"LinearSA needs alpha in [0, 1), got {self.alpha}")
        if not self.gamma * self.lam_max / 2.0**self.alpha < 2.0:
            raise ValueError("LinearSA needs gamma lambda_max(A) / 2^alpha < 2 (contraction from n = 2)")

    def sequences(self, n):
        k = np.arange(2, n + 1)
        h = self.h(k)
        return _step_norms(self.A_mat, h, self.p), h, np.zeros(n - 1)

    def classification(self, n):
        r, _, _ = self.sequences(n)
        return self.alpha, self._classify_rho(r, self.alpha), self.gamma

    def step(self, n, X, W):
        h = float(self.h(n))
        return X - h * (_matvec(X, self.A_mat) - self.B_vec + W[:, : self.d])

    def affine(self, n):
        h = float(self.h(n))
        return np.eye(self.d) - h * self.A_mat, h * self.B_vec, -h * np.eye(self.d)


@dataclass(frozen=True)
class LinearSAScaledNoise(_LinearBase):
    """X_n = (I - gamma A) X_{n-1} + gamma B - (gamma/n^alpha) eps_n."""

    example = Example.SCALED_NOISE
    regime = Regime.C17

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"LinearSAScaledNoise needs alpha in (0, 1), got {self.alpha}")
        if not 0.0 < self.gamma * self.lam_min < 1.0:
            raise ValueError("LinearSAScaledNoise needs gamma * lambda_min(A) in (0, 1)")
        if not self.rho < 1.0:
            raise ValueError(f"||I - gamma A||_p = {self.rho} must be < 1")

    @property
    def rho(self) -> float:
        return float(_step_norms(self.A_mat, np.array([self.gamma]), self.p)[0])

    def sequences(self, n):
        k = np.arange(2, n + 1)
        return np.full(n - 1, self.rho), self.h(k), np.zeros(n - 1)

    def classification(self, n):
        return self.alpha, self.rho, self.gamma

    def step(self, n, X, W):
        M = np.eye(self.d) - self.gamma * self.A_mat
        return _matvec(X, M) + self.gamma * self.B_vec - float(self.h(n)) * W[:, : self.d]

    def affine(self, n):
        M = np.eye(self.d) - self.gamma * self.A_mat
        return M, self.gamma * self.B_vec, -float(self.h(n)) * np.eye(self.d)


@dataclass(frozen=True)
class LinearSAAdditive(_LinearBase):
    """X_n = (I - h_n A) X_{n-1} + h_n B - gamma eps_n."""

    example = Example.ADDITIVE
    regime = Regime.C16

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"LinearSAAdditive needs alpha in (0, 1), got {self.alpha}")
        if not 0.0 < self.gamma * self.lam_min < 1.0:
            raise ValueError("LinearSAAdditive needs gamma * lambda_min(A) in (0, 1)")
        if not self.gamma * self.lam_max / 2.0**self.alpha < 2.0:
            raise ValueError("LinearSAAdditive needs gamma lambda_max(A) / 2^alpha < 2 (contraction from n = 2)")

    def sequences(self, n):
        k = np.arange(2, n + 1)
        return _step_norms(self.A_mat, self.h(k), self.p), np.full(n - 1, self.gamma), np.zeros(n - 1)

    def classification(self, n):
        r, _, _ = self.sequences(n)
        return self.alpha, self._classify_rho(r, self.alpha), self.gamma

    def step(self, n, X, W):
        h = float(self.h(n))
        return X - h * _matvec(X, self.A_mat) + h * self.B_vec - self.gamma * W[:, : self.d]

    def affine(self, n):
        h = float(self.h(n))
        return np.eye(self.d) - h * self.A_mat, h * self.B_vec, -self.gamma * np.eye(self.d)


@dataclass(frozen=True)
class ProjectedLinearSA(_LinearBase):
    """X_n = Pi_C[(I - h_n M_n) Pi_C[X_{n-1}] + h_n B - h_n eps_n] on the
    Euclidean ball of radius ``D``, with random M_n = A + jitter diag(U),
    U uniform on [-1, 1]^d."""

    D: float = 1.0
    jitter: float = 0.0

    example = Example.PROJECTED_LINEAR_SA

    def __post_init__(self):
        super().__post_init__()
        if self.p != 2:
            raise ValueError("ProjectedLinearSA uses the Euclidean norm (p = 2)")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("ProjectedLinearSA needs alpha in [0, 1)")
        if self.D <= 0 or self.jitter < 0:
            raise ValueError("D must be > 0 and jitter >= 0")
        if self.lam <= 0:
            raise ValueError("jitter must stay below lambda_min(A)")
        if not self.gamma * self.lam_hi / 2.0**self.alpha <= 1.0:
            raise ValueError("ProjectedLinearSA needs gamma lambda_max / 2^alpha <= 1")
        if not self.gamma * self.lam < 1.0:
            raise ValueError("ProjectedLinearSA needs gamma lambda < 1")
        if np.linalg.norm(self.init.mean()) > self.D + 1e-12 or not self.init.is_deterministic:
            raise ValueError("initial point must be deterministic and lie in the ball")

    @property
    def lam(self) -> float:
        return self.lam_min - self.jitter

    @property
    def lam_hi(self) -> float:
        return self.lam_max + self.jitter

    @property
    def extra_width(self) -> int:
        return self.d

    def sequences(self, n):
        h = self.h(np.arange(2, n + 1))
        return 1.0 - h * self.lam, h, 2.0 * self.D * self.lam_hi * h

    def classification(self, n):
        return self.alpha, self.gamma * self.lam, self.gamma * max(1.0, 2.0 * self.D * self.lam_hi)

    def step(self, n, X, W):
        h = float(self.h(n))
        d = self.d
        U = 2.0 * W[:, d:] - 1.0
        Y = _project(X, self.D)
        MY = _matvec(Y, self.A_mat) + self.jitter * U * Y
        return _project(Y - h * MY + h * self.B_vec - h * W[:, :d], self.D)

    def probe_point(self, rng):
        v = rng.standard_normal(self.d)
        return v / np.linalg.norm(v) * self.D * rng.random()


@dataclass(frozen=True)
class ProjectedSGD(ChainModel):
    """Projected SGD/SGLD on sum_i 0.5 (x - c_i)^T diag(H_i) (x - c_i):
    X_n = Pi_C[X_{n-1} - h_n (grad_J(X_{n-1}) + eps_n)] with a uniform
    minibatch J of size ``batch``."""

    H: tuple = ((1.0,),)
    centers: tuple = ((0.0,),)
    batch: int = 1
    gamma: float = 0.5
    alpha: float = 0.0
    D: float = 1.0

    example = Example.PROJECTED_SGD

    def __post_init__(self):
        H, C = self.H_arr, self.C_arr
        if H.shape != C.shape or H.shape[1] != self.d:
            raise ValueError("H and centers must both be (N, d)")
        if not 1 <= self.batch <= H.shape[0]:
            raise ValueError("batch size must lie in [1, N]")
        if self.p != 2:
            raise ValueError("ProjectedSGD uses the Euclidean norm (p = 2)")
        if not self.m > 0:
            raise ValueError("losses must be strongly convex (m > 0)")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("ProjectedSGD needs alpha in [0, 1)")
        h2 = self.gamma / 2.0**self.alpha
        if not 0.0 < 2 * self.m * h2 - self.lip**2 * h2**2 < 1.0:
            raise ValueError("need 2 m h - l^2 h^2 in (0, 1) at every step")
        if np.linalg.norm(self.init.mean()) > self.D + 1e-12 or not self.init.is_deterministic:
            raise ValueError("initial point must be deterministic and lie in the ball")

    @property
    def H_arr(self):
        return np.atleast_2d(np.asarray(self.H, float))

    @property
    def C_arr(self):
        return np.atleast_2d(np.asarray(self.centers, float))

    @property
    def m(self) -> float:
        return float(self.H_arr.min())

    @property
    def lip(self) -> float:
        return float(self.H_arr.max())

    @property
    def grad_bound(self) -> float:
        H, C = self.H_arr, self.C_arr
        return float(np.max(H.max(axis=1) * (self.D + np.linalg.norm(C, axis=1))))

    @property
    def extra_width(self) -> int:
        return self.H_arr.shape[0]

    def h(self, n):
        return self.gamma / np.asarray(n, dtype=float) ** self.alpha

    def sequences(self, n):
        h = self.h(np.arange(2, n + 1))
        rho = np.sqrt((1 - self.m * h) ** 2 + (self.lip**2 - self.m**2) * h**2)
        return rho, h, 2.0 * self.grad_bound * h

    def classification(self, n):
        r, _, _ = self.sequences(n)
        return self.alpha, self._classify_rho(r, self.alpha), self.gamma * max(1.0, 2 * self.grad_bound)

    def minibatch_grad(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        idx = np.argsort(U, axis=1, kind="stable")[:, : self.batch]
        H, C = self.H_arr[idx], self.C_arr[idx]
        return np.mean(H * (X[:, None, :] - C), axis=1)

    def step(self, n, X, W):
        h = float(self.h(n))
        d = self.d
        return _project(X - h * self.minibatch_grad(X, W[:, d:]) - h * W[:, :d], self.D)

    def probe_point(self, rng):
        v = rng.standard_normal(self.d)
        return v / np.linalg.norm(v) * self.D * rng.random()


@dataclass(frozen=True)
class Subsampled(ChainModel):
    """A FunctionalAR chain observed after gaps k_2, k_3, ...: one step
    applies the inner map k_n times. The last listed gap repeats. The
    innovation is the block of k_max inner innovations, measured with the
    sup over blocks."""

    R: tuple = ((0.5,),)
    g: tuple = (0.0,)
    gaps: tuple = (1,)

    example = Example.SUBSAMPLED
    is_affine = True

    def __post_init__(self):
        if not self.gaps or min(self.gaps) < 1:
            raise ValueError("gaps must be positive integers")
        FunctionalAR(self.noise, self.init, self.p, self.R, self.g)

    @property
    def inner(self) -> FunctionalAR:
        return FunctionalAR(self.noise, self.init, self.p, self.R, self.g)

    @property
    def k_max(self) -> int:
        return max(self.gaps)

    def gap(self, n: int) -> int:
        i = n - 2
        return self.gaps[i] if i < len(self.gaps) else self.gaps[-1]

    @property
    def noise_width(self) -> int:
        return self.d * self.k_max

    def draw_noise(self, rng, n):
        return self.noise.sample(rng, (n - 1) * self.k_max).reshape(n - 1, self.noise_width)

    def noise_row_mean(self):
        return np.tile(self.noise.mean(), self.k_max)

    def noise_metric(self, W, W2):
        d = self.d
        blocks = (W - W2).reshape(len(W), self.k_max, d)
        return lp_norm(blocks, self.p).max(axis=1)

    def sequences(self, n):
        rho = self.inner.rho
        k = np.array([self.gap(i) for i in range(2, n + 1)], dtype=float)
        return rho**k, (1.0 - rho**k) / (1.0 - rho), np.zeros(n - 1)

    def classification(self, n):
        rho = self.inner.rho
        return 0.0, 1.0 - rho, 1.0 / (1.0 - rho)

    def step(self, n, X, W):
        R, g, d = np.asarray(self.R, float), np.asarray(self.g, float), self.d
        for i in range(self.gap(n)):
            X = _matvec(X, R) + g + W[:, i * d : (i + 1) * d]
        return X

    def affine(self, n):
        R, g, d = np.asarray(self.R, float), np.asarray(self.g, float), self.d
        k = self.gap(n)
        M, c = np.eye(d), np.zeros(d)
        N = np.zeros((d, self.noise_width))
        for i in range(k):
            M, c = R @ M, R @ c + g
            N = R @ N
            N[:, i * d : (i + 1) * d] += np.eye(d)
        return M, c, N

    def g_sup(self):
        # G for the block innovation is at most the diameter under the sup metric
        return self.noise.diameter(self.p)

    def noise_diameter(self):
        return self.noise.diameter(self.p)


_MODELS = {
    Example.FUNCTIONAL_AR: FunctionalAR,
    Example.UNIT_ROOT: UnitRoot,
    Example.LINEAR_SA: LinearSA,
    Example.PROJECTED_LINEAR_SA: ProjectedLinearSA,
    Example.SCALED_NOISE: LinearSAScaledNoise,
    Example.ADDITIVE: LinearSAAdditive,
    Example.PROJECTED_SGD: ProjectedSGD,
    Example.SUBSAMPLED: Subsampled,
}


def make_model(example, noise: NoiseSpec, init: Optional[InitSpec] = None, p: float = 2.0, **params):
    """Build one of the example models; parameter constraints are checked."""
    cls = _MODELS[Example(example)]
    if init is None:
        init = InitSpec.point(np.zeros(noise.d))
    for key in ("g", "B"):
        if key not in params and key in {f.name for f in fields(cls)}:
            params[key] = np.zeros(noise.d)
    tuple_keys = ("R", "A", "H", "centers")
    for key in tuple_keys:
        if key in params:
            params[key] = tuple(map(tuple, np.atleast_2d(np.asarray(params[key], float)).tolist()))
    for key in ("g", "B", "gaps"):
        if key in params:
            params[key] = tuple(np.atleast_1d(np.asarray(params[key])).tolist())
    if "gaps" in params:
        params["gaps"] = tuple(int(k) for k in params["gaps"])
    return cls(noise=noise, init=init, p=float(p), **params)


# ---------------------------------------------------------------------------
# functionals


class FunctionalKind(str, Enum):
    SUM_OF_STATES = "SumOfStates"
    SUM_OF_NORMS = "SumOfNorms"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class FunctionalSpec:
    """f(X_1, ..., X_n). ``Custom`` takes a callable on the full trajectory
    array (N, n, d) -> (N, out_dim) together with its per-argument Lipschitz
    certificate, which must be <= 1."""

    kind: FunctionalKind = FunctionalKind.SUM_OF_STATES
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    lipschitz: float = 1.0
    out_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind(self.kind))
        if self.kind is FunctionalKind.CUSTOM:
            if self.fn is None:
                raise ValueError("Custom functional needs a callable")
            if not self.lipschitz <= 1.0:
                raise ValueError("Custom functional must be 1-Lipschitz in each argument")

    def dim(self, d: int) -> int:
        if self.kind is FunctionalKind.SUM_OF_STATES:
            return d
        if self.kind is FunctionalKind.SUM_OF_NORMS:
            return 1
        return self.out_dim or d

    @property
    def needs_trajectory(self) -> bool:
        return self.kind is FunctionalKind.CUSTOM


# ---------------------------------------------------------------------------
# simulation


def step(model: ChainModel, n: int, state, noise_row) -> np.ndarray:
    if n < 2:
        raise ValueError("the recursion starts at n = 2")
    X = np.atleast_2d(np.asarray(state, dtype=float))
    W = np.atleast_2d(np.asarray(noise_row, dtype=float))
    out = model.step(n, X, W)
    if not np.all(np.isfinite(out)):
        raise ChainFault(f"non-finite state at step n={n}")
    return out if np.ndim(state) == 2 else out[0]


def draw_paths(model: ChainModel, n: int, seed: int, reps: Sequence[int]):
    """Initial states (N, d) and noise (N, n-1, width) for replications ``reps``,
    each from its own counter-based stream."""
    X1 = np.empty((len(reps), model.d))
    W = np.empty((len(reps), n - 1, model.noise_width))
    for j, r in enumerate(reps):
        rng = stream(seed, int(r))
        X1[j] = model.init.sample(rng, 1)[0]
        W[j] = model.draw_noise(rng, n)
    return X1, W


def run_paths(model: ChainModel, X1: np.ndarray, W: np.ndarray, visit=None) -> np.ndarray:
    """Run all replications; ``visit(k, X)`` is called after each state X_k
    (k = 1..n). Returns X_n."""
    X = X1.copy()
    if visit is not None:
        visit(1, X)
    for k in range(2, W.shape[1] + 2):
        X = model.step(k, X, W[:, k - 2, :])
        if not np.all(np.isfinite(X)):
            raise ChainFault(f"non-finite state at step n={k}")
        if visit is not None:
            visit(k, X)
    return X


def simulate(model: ChainModel, n: int, seed: int, rep: int = 0) -> np.ndarray:
    """Trajectory (X_1, ..., X_n) as an (n, d) array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X1, W = draw_paths(model, max(n, 2), seed, [rep])
    traj = []
    run_paths(model, X1, W[:, : max(n - 1, 1)], lambda k, X: traj.append(X[0].copy()))
    return np.array(traj[:n])


def trajectory_csv(traj: np.ndarray) -> str:
    traj = np.atleast_2d(traj)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step"] + [f"x_{i + 1}" for i in range(traj.shape[1])])
    for k, row in enumerate(traj, start=1):
        w.writerow([k] + [repr(float(v)) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# exact moments of affine models


def mean_path(model: ChainModel, n: int) -> np.ndarray:
    """E X_k for k = 1..n by the exact mean recursion (affine models)."""
    if not model.is_affine:
        raise NotImplementedError(f"{model.example.value} has no exact mean recursion")
    out = np.empty((n, model.d))
    out[0] = model.init.mean()
    wbar = model.noise_row_mean()
    for k in range(2, n + 1):
        M, c, N = model.affine(k)
        out[k - 1] = M @ out[k - 2] + c + N @ wbar
    return out


def sum_mean(model: ChainModel, n: int) -> np.ndarray:
    return mean_path(model, n).sum(axis=0, dtype=float)


def sum_covariance(model: ChainModel, n: int) -> np.ndarray:
    """Cov(X_1 + ... + X_n) for affine models."""
    if not model.is_affine:
        raise NotImplementedError(f"{model.example.value} has no exact covariance")
    d = model.d
    width = model.noise_width
    cov_w = np.zeros((width, width))
    cov_w[:, :] = np.kron(np.eye(width // d), model.noise.cov()) if width % d == 0 else 0.0
    if model.extra_width:
        raise NotImplementedError("auxiliary randomness is not affine")
    P = np.eye(d)  # P_k = I + P_{k+1} M_{k+1}
    total = np.zeros((d, d))
    for k in range(n, 1, -1):
        M, _, N = model.affine(k)
        Wk = P @ N
        total += Wk @ cov_w @ Wk.T
        P = np.eye(d) + P @ M
    total += P @ model.init.cov() @ P.T
    return total


# ---------------------------------------------------------------------------
# dominating variables and constants


def g_eps(model: ChainModel, y) -> np.ndarray:
    """G_eps(y) = E delta(y, eps') for the model's innovation."""
    if isinstance(model, Subsampled):
        raise NotImplementedError("G of the block innovation has no closed form; use g_sup")
    return model.noise.g(y, model.p)


def g_x1(model: ChainModel, x) -> np.ndarray:
    return model.init.g(x, model.p)


def derive_constants(model: ChainModel, which, q: Optional[float] = None) -> MomentConstants:
    """Certified moment constants for one bound kind."""
    kind = BoundKind(which)
    noise, p = model.noise, model.p
    sub = isinstance(model, Subsampled)
    estimated = False
    kw: dict = {"init_tail": model.init.tail_spec(p)}

    def moment(qq):
        nonlocal estimated
        if sub:
            if not noise.is_bounded:
                raise NotApplicableError("block innovations are certified for bounded noise only")
            return model.g_sup() ** qq
        est = noise.g_moment(qq, p)
        estimated = estimated or est.estimated
        return est.value

    if kind is BoundKind.BERNSTEIN:
        if sub:
            T = moment(1.0)
            kw.update(H1=T, A1=T * T)
        else:
            H1, A1, est = noise.bernstein_constants(p)
            estimated = estimated or est
            kw.update(H1=H1, A1=A1)
    elif kind is BoundKind.HOEFFDING:
        kw["A1"] = moment(2.0)
        if noise.is_bounded:
            kw["T"] = model.g_sup()
    elif kind is BoundKind.MCDIARMID:
        if not noise.is_bounded:
            raise NotApplicableError("McDiarmid bound needs bounded noise")
        if not model.init.tail_spec(p).is_bounded:
            raise NotApplicableError("McDiarmid bound needs a bounded initial state")
        kw["T1"] = model.noise_diameter()
    elif kind is BoundKind.SEMIEXP:
        if q is None or not 0.0 < q < 1.0:
            raise ValueError("semi-exponential constants need q in (0, 1)")
        if sub:
            T = moment(1.0)
            kw.update(A1_semi=T * T * math.exp(T**q), Eexp_q=math.exp(T**q), semi_q=q)
        else:
            a, b = noise.g_semi(q, p)
            estimated = estimated or a.estimated
            kw.update(A1_semi=a.value, Eexp_q=b.value, semi_q=q)
    elif kind is BoundKind.FUK_NAGAEV:
        kw["A1"] = moment(2.0)
        kw["noise_moments"] = {q: moment(q)}
    elif kind in (BoundKind.VBE,):
        kw["noise_moments"] = {q: moment(q)}
    elif kind is BoundKind.WEAK:
        # weak moment sup_x x^q P(G > x) <= E[G^q]
        kw["weak_moments"] = {q: moment(q)}
    elif kind in (BoundKind.MZ, BoundKind.VBE_MOMENT):
        init_est = model.init.moment(q, p)
        estimated = estimated or init_est.estimated
        kw["noise_moments"] = {q: moment(q)}
        kw["init_moments"] = {q: init_est.value}
    if kind in (BoundKind.FUK_NAGAEV, BoundKind.VBE, BoundKind.WEAK, BoundKind.MZ, BoundKind.VBE_MOMENT):
        if q is None:
            raise ValueError(f"{kind.value} constants need q")
    return MomentConstants(estimated=estimated, **kw)


# ---------------------------------------------------------------------------
# contraction check


@dataclass
class ContractionReport:
    n: int
    rho_n: float
    tau_n: float
    xi_n: float
    ratios: list
    ratio_se: list
    residual_max: float
    violations: list
    ok: bool


def verify_contraction(
    model: ChainModel, n: int, N: int = 2000, seed: int = 0, probes=None, n_probes: int = 5
) -> ContractionReport:
    """Check E||F_n(x, e) - F_n(x', e)|| <= rho_n ||x - x'|| (within 3 SE) and
    ||F_n(x, e) - F_n(x, e')|| <= tau_n delta(e, e') + xi_n on paired draws."""
    if N < 1000:
        raise ValueError("use at least 1000 paired draws")
    r, t, x = model.sequences(n)
    rho_n, tau_n, xi_n = float(r[-1]), float(t[-1]), float(x[-1])
    rng = stream(seed, 0)
    if probes is None:
        probes = [(model.probe_point(rng), model.probe_point(rng)) for _ in range(n_probes)]
    W = model.draw_noise(rng, N + 1)
    W2 = model.draw_noise(rng, N + 1)
    ratios, ses, violations = [], [], []
    resid_max = -math.inf
    for j, (a, b) in enumerate(probes):
        a = np.asarray(a, float).reshape(1, -1)
        b = np.asarray(b, float).reshape(1, -1)
        dist = float(lp_norm(a - b, model.p)[0])
        if dist == 0:
            continue
        Fa = model.step(n, np.repeat(a, N, axis=0), W)
        Fb = model.step(n, np.repeat(b, N, axis=0), W)
        rat = lp_norm(Fa - Fb, model.p) / dist
        m, se = float(rat.mean()), float(rat.std(ddof=1) / math.sqrt(N))
        ratios.append(m)
        ses.append(se)
        if m > rho_n + 3 * se + 1e-12:
            violations.append(("contraction", n, j, m))
        Fa2 = model.step(n, np.repeat(a, N, axis=0), W2)
        resid = lp_norm(Fa - Fa2, model.p) - tau_n * model.noise_metric(W, W2)
        rm = float(resid.max())
        resid_max = max(resid_max, rm)
        if rm > xi_n + 1e-12 * max(1.0, xi_n):
            violations.append(("lipschitz-noise", n, j, rm))
    return ContractionReport(n, rho_n, tau_n, xi_n, ratios, ses, resid_max, violations, not violations)
