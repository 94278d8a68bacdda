"""Grid-search empirical risk minimization along a scalar contractive chain.

The chain is X_k = (1 - theta0/k^alpha) X_{k-1} + eps_k with Gaussian
noise, the predictors are f_k(theta, x) = (1 - theta/k^alpha) x and the loss
is |.|. Because X_{k-1} is Gaussian and independent of eps_k, the population
risk has a closed form, which serves as the reference for excess risk.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .montecarlo import map_reps
from .noise import Estimate
from .rng import derive_seed, stream

__all__ = [
    "ERMProblem",
    "simulate_chain",
    "empirical_risk",
    "empirical_risk_grid",
    "population_risk",
    "exact_risk_grid",
    "erm_fit",
    "covering_ok",
    "ERMReport",
    "excess_risk_experiment",
    "envelope_shape",
    "erm_csv",
]


@dataclass(frozen=True)
class ERMProblem:
    alpha: float = 0.25
    theta0: float = 0.5
    theta_lo: float = 0.1
    theta_hi: float = 0.9
    sigma: float = 1.0
    x1: float = 0.0
    lipschitz: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if not 0.0 < self.theta_lo <= self.theta_hi < 1.0:
            raise ValueError("need 0 < theta_lo <= theta_hi < 1")
        if not self.theta_lo <= self.theta0 <= self.theta_hi:
            raise ValueError("theta0 must lie in [theta_lo, theta_hi]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def grid(self, n: int) -> np.ndarray:
        """Equispaced grid on [theta_lo, theta_hi] with spacing <= 1/(L n)."""
        width = self.theta_hi - self.theta_lo
        if width == 0:
            return np.array([self.theta_lo])
        m = int(math.ceil(width * self.lipschitz * n)) + 1
        return np.linspace(self.theta_lo, self.theta_hi, m)

    def phi(self, k, theta=None) -> np.ndarray:
        theta = self.theta0 if theta is None else theta
        return 1.0 - theta / np.asarray(k, dtype=float) ** self.alpha


def simulate_chain(problem: ERMProblem, n: int, rng: np.random.Generator) -> np.ndarray:
    eps = problem.sigma * rng.standard_normal(n - 1)
    phi = problem.phi(np.arange(2, n + 1))
    X = np.empty(n)
    X[0] = problem.x1
    for k in range(1, n):
        X[k] = phi[k - 1] * X[k - 1] + eps[k - 1]
    return X


def empirical_risk(theta: float, trajectory, alpha: float) -> float:
    """(1/(n-1)) sum_{k=2}^n |X_k - (1 - theta/k^alpha) X_{k-1}|."""
    X = np.asarray(trajectory, dtype=float)
    if len(X) < 2:
        raise ValueError("trajectory needs n >= 2")
    k = np.arange(2, len(X) + 1, dtype=float)
    return float(np.mean(np.abs(X[1:] - (1.0 - theta / k**alpha) * X[:-1])))


def empirical_risk_grid(grid, trajectory, alpha: float) -> np.ndarray:
    X = np.asarray(trajectory, dtype=float)
    k = np.arange(2, len(X) + 1, dtype=float)
    e = X[1:] - X[:-1]
    z = X[:-1] / k**alpha
    return np.mean(np.abs(e[None, :] + np.asarray(grid)[:, None] * z[None, :]), axis=1)


def erm_fit(problem: ERMProblem, trajectory, grid=None) -> float:
    """Grid argmin of the empirical risk; ties go to the smaller theta."""
    grid = problem.grid(len(trajectory)) if grid is None else np.sort(np.asarray(grid, float))
    return float(grid[int(np.argmin(empirical_risk_grid(grid, trajectory, problem.alpha)))])


def _abs_normal_mean(mu, s):
    mu, s = np.broadcast_arrays(np.asarray(mu, float), np.asarray(s, float))
    out = np.abs(mu).astype(float)
    pos = s > 0
    m, v = mu[pos], s[pos]
    out[pos] = v * math.sqrt(2.0 / math.pi) * np.exp(-(m**2) / (2 * v**2)) + m * special.erf(
        m / (v * math.sqrt(2.0))
    )
    return out


def exact_risk_grid(problem: ERMProblem, n: int, grid) -> np.ndarray:
    """R_n(theta) on ``grid`` in closed form."""
    phi = problem.phi(np.arange(2, n + 1))
    m, v = np.empty(n), np.empty(n)
    m[0], v[0] = problem.x1, 0.0
    for k in range(1, n):
        m[k] = phi[k - 1] * m[k - 1]
        v[k] = phi[k - 1] ** 2 * v[k - 1] + problem.sigma**2
    kp = np.arange(2, n + 1, dtype=float) ** problem.alpha
    dth = np.asarray(grid, dtype=float)[:, None] - problem.theta0
    mu = dth * m[None, :-1] / kp
    s = np.sqrt(problem.sigma**2 + dth**2 * v[None, :-1] / kp**2)
    return _abs_normal_mean(mu, s).mean(axis=1)


def population_risk(theta: float, problem: ERMProblem, n: int, N: int, seed: int) -> Estimate:
    """Monte-Carlo R_n(theta) over N fresh trajectories, with its SE."""
    vals = np.array(
        [empirical_risk(theta, simulate_chain(problem, n, stream(seed, r)), problem.alpha) for r in range(N)]
    )
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0, True)


def covering_ok(problem: ERMProblem, n: int, D: float = 2.0) -> bool:
    """ln(1 + (theta_hi - theta_lo) L n) <= D ln n."""
    return math.log1p((problem.theta_hi - problem.theta_lo) * problem.lipschitz * n) <= D * math.log(n)


def envelope_shape(n, alpha: float):
    n = np.asarray(n, dtype=float)
    return np.sqrt(np.log(n) / n ** (1.0 - 2.0 * alpha))


@dataclass
class ERMReport:
    n_grid: np.ndarray
    excess: np.ndarray  # (reps, len(n_grid))
    theta_hat: np.ndarray
    C_hat: float
    envelope: np.ndarray
    dominated: np.ndarray  # per repetition, over n beyond the first

    @property
    def median(self) -> np.ndarray:
        return np.median(self.excess, axis=0)

    @property
    def q10(self) -> np.ndarray:
        return np.quantile(self.excess, 0.1, axis=0)

    @property
    def q90(self) -> np.ndarray:
        return np.quantile(self.excess, 0.9, axis=0)

    @property
    def n_dominated(self) -> int:
        return int(self.dominated.sum())

    @property
    def median_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.median) < 0))


def excess_risk_experiment(
    problem: ERMProblem,
    n_grid: Sequence[int],
    N: int,
    seed: int,
    threads: int = 1,
    fit_quantile: float = 0.9,
) -> ERMReport:
    """N repetitions per n. Excess risk R_n(theta_hat) - min_grid R_n uses
    the closed-form risk. The constant C_hat is the ``fit_quantile`` quantile
    of excess / shape at the smallest n; domination is checked at the rest."""
    n_grid = np.array(sorted(int(v) for v in n_grid))
    tables = []
    for n in n_grid:
        g = problem.grid(int(n))
        R = exact_risk_grid(problem, int(n), g)
        tables.append((g, R, float(R.min())))

    def work(reps):
        out = np.empty((len(reps), len(n_grid), 2))
        for i, r in enumerate(reps):
            for j, n in enumerate(n_grid):
                g, R, Rmin = tables[j]
                X = simulate_chain(problem, int(n), stream(derive_seed(seed, f"erm-{n}"), int(r)))
                idx = int(np.argmin(empirical_risk_grid(g, X, problem.alpha)))
                out[i, j] = (R[idx] - Rmin, g[idx])
        return out

    res = np.concatenate(map_reps(work, N, 1, threads), axis=0)
    excess, theta_hat = res[..., 0], res[..., 1]
    shape = envelope_shape(n_grid, problem.alpha)
    C_hat = float(np.quantile(excess[:, 0] / shape[0], fit_quantile))
    env = C_hat * shape
    dominated = np.all(excess[:, 1:] <= env[None, 1:], axis=1)
    return ERMReport(n_grid, excess, theta_hat, C_hat, env, dominated)


def erm_csv(report: ERMReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "excess_median", "excess_q10", "excess_q90", "fitted_envelope"])
    for j, n in enumerate(report.n_grid):
        w.writerow(
            [
                int(n),
                repr(float(report.median[j])),
                repr(float(report.q10[j])),
                repr(float(report.q90[j])),
                repr(float(report.envelope[j])),
            ]
        )
    return buf.getvalue()
