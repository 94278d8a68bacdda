"""Stochastic approximation by averaging: final iterate, uniform average and
suffix average, with the bias constants of the linear case."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .chains import ChainFault, ChainModel, LinearSA, _LinearBase, draw_paths, mean_path, run_paths
from .montecarlo import map_reps
from .noise import lp_norm

__all__ = [
    "Policy",
    "SARun",
    "SAResult",
    "run_sa",
    "bias_rate",
    "mean_bias_bound",
    "bias_constant_C0",
    "final_iterate_constant",
    "mean_error_path",
    "exact_average_bias",
    "SlopeReport",
    "slope_experiment",
    "sa_csv",
]

_SERIES_TOL = 1e-16
_SERIES_MAX = 10**6


class Policy(str, Enum):
    FINAL = "FinalIterate"
    UNIFORM = "UniformAverage"
    SUFFIX = "SuffixAverage"


@dataclass(frozen=True)
class SARun:
    model: ChainModel
    x_star: tuple

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x_star, dtype=float))
        if len(x) != self.model.d:
            raise ValueError("x_star has the wrong dimension")
        if isinstance(self.model, _LinearBase):
            res = self.model.A_mat @ x - self.model.B_vec
            if np.max(np.abs(res)) > 1e-10:
                raise ValueError("x_star does not solve A x = B")
        object.__setattr__(self, "x_star", tuple(x.tolist()))

    @classmethod
    def linear(cls, model: _LinearBase) -> "SARun":
        return cls(model, tuple(model.x_star().tolist()))

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.x_star, dtype=float)


def _suffix_start(n: int) -> int:
    return max(1, n // 2)


@dataclass
class SAResult:
    n: int
    X_final: np.ndarray
    X_bar: np.ndarray
    X_hat: np.ndarray
    err_final: float
    err_uniform: float
    err_suffix: float


def run_sa(run: SARun, n: int, seed: int, rep: int = 0) -> SAResult:
    """One replication up to n. The suffix average is the plain mean of
    X_i over i = floor(n/2), ..., n."""
    if n < 2:
        raise ValueError("n must be >= 2")
    model = run.model
    X1, W = draw_paths(model, n, seed, [rep])
    m = _suffix_start(n)
    acc = {"all": np.zeros(model.d), "suffix": np.zeros(model.d)}

    def visit(k, X):
        acc["all"] += X[0]
        if k >= m:
            acc["suffix"] += X[0]

    try:
        Xn = run_paths(model, X1, W, visit)[0]
    except ChainFault as exc:
        raise ChainFault(f"stochastic approximation diverged: {exc}") from None
    bar = acc["all"] / n
    hat = acc["suffix"] / (n - m + 1)
    p, x = model.p, run.x
    e = lambda v: float(lp_norm(v - x, p))  # noqa: E731
    return SAResult(n, Xn, bar, hat, e(Xn), e(bar), e(hat))


def bias_rate(model: _LinearBase) -> float:
    """r with ||I - h_k A||_p <= 1 - r/k^alpha for every k >= 2."""
    if not isinstance(model, LinearSA):
        raise TypeError("bias constants are defined for LinearSA models")
    g_max = model.gamma * model.lam_max
    # past k0, h_k lambda_max <= 1 and the norm bound is exact
    if model.alpha > 0:
        k0 = int(math.ceil(g_max ** (1.0 / model.alpha))) + 2
    else:
        k0 = 3
    return model.classification(max(k0, 3))[1]


def _e1(run: SARun, e1: Optional[float]) -> float:
    if e1 is not None:
        return float(e1)
    return float(lp_norm(run.model.init.mean() - run.x, run.model.p))


def mean_bias_bound(run: SARun, n: int, e1: Optional[float] = None) -> float:
    """||E X_1 - x*||_p exp(-r (n-2)/n^alpha), r = gamma lambda_min."""
    if n < 2:
        raise ValueError("n must be >= 2")
    r = bias_rate(run.model)
    return _e1(run, e1) * math.exp(-r * (n - 2) / n**run.model.alpha)


def _series(r: float, alpha: float) -> float:
    """Upper bound on sum_{k>=2} exp(-r (k-2)/k^alpha).

    Terms are summed until they fall below 1e-16; if that has not happened
    by k = 10^6 the remainder is bounded by an incomplete-gamma integral
    (the terms decrease in k)."""
    if alpha >= 1:
        raise ValueError("the series diverges for alpha >= 1")
    total, start = 0.0, 2
    while start <= _SERIES_MAX:
        k = np.arange(start, start + 65536, dtype=float)
        t = np.exp(-r * (k - 2) / k**alpha)
        total += float(t.sum())
        if t[-1] < _SERIES_TOL:
            return total
        start += 65536
    K = float(start - 1)
    beta = 1.0 - alpha
    c = r * (1.0 - 2.0 / K)
    a = 1.0 / beta
    tail = a * c ** (-a) * special.gamma(a) * special.gammaincc(a, c * K**beta)
    return total + float(tail)


def bias_constant_C0(run: SARun, e1: Optional[float] = None) -> float:
    """C0 = ||E X_1 - x*||_p (1 + sum_{k>=2} exp(-r (k-2)/k^alpha))."""
    e = _e1(run, e1)
    if e == 0.0:
        return 0.0
    return e * (1.0 + _series(bias_rate(run.model), run.model.alpha))


def final_iterate_constant(run: SARun, n: int, e1: Optional[float] = None) -> float:
    """C_n = n ||E X_1 - x*||_p exp(-r (n-2)/n^alpha) with r = gamma lambda_min."""
    return n * mean_bias_bound(run, n, e1)


def mean_error_path(run: SARun, n: int) -> np.ndarray:
    """E X_k - x* for k = 1..n. For LinearSA the error obeys
    e_k = (I - h_k A) e_{k-1}, iterated directly to avoid cancellation."""
    model = run.model
    if not isinstance(model, LinearSA):
        return mean_path(model, n) - run.x
    out = np.empty((n, model.d))
    out[0] = model.init.mean() - run.x
    for k in range(2, n + 1):
        out[k - 1] = out[k - 2] - float(model.h(k)) * (model.A_mat @ out[k - 2])
    return out


def exact_average_bias(run: SARun, n: int) -> np.ndarray:
    """||E Xbar_k - x*||_p for k = 1..n via the exact mean recursion."""
    e = mean_error_path(run, n)
    bars = np.cumsum(e, axis=0) / np.arange(1, n + 1)[:, None]
    return lp_norm(bars, run.model.p)


@dataclass
class SlopeReport:
    n_grid: np.ndarray
    err_final: np.ndarray
    err_uniform: np.ndarray
    err_suffix: np.ndarray
    se_uniform: np.ndarray
    se_suffix: np.ndarray
    slope_uniform: float
    slope_suffix: float
    slope_final: float
    N: int


def _loglog_slope(n, e) -> float:
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


def slope_experiment(
    run: SARun, n_grid: Sequence[int], N: int, seed: int, threads: int = 1
) -> SlopeReport:
    """Monte-Carlo E||X_n - x*||, E||Xbar_n - x*|| and E||Xhat_n - x*|| on
    ``n_grid`` from a single simulation to max(n_grid) per replication."""
    model = run.model
    n_grid = np.array(sorted(set(int(v) for v in n_grid)))
    if n_grid[0] < 2:
        raise ValueError("n must be >= 2")
    n_max = int(n_grid[-1])
    need = set(n_grid.tolist()) | {_suffix_start(int(v)) - 1 for v in n_grid}
    x, p = run.x, model.p

    def work(reps):
        X1, W = draw_paths(model, n_max, seed, reps)
        S = np.zeros((len(reps), model.d))
        prefix, finals = {0: S.copy()}, {}

        def visit(k, X):
            S[:] += X
            if k in need:
                prefix[k] = S.copy()
            if k in finals_wanted:
                finals[k] = X.copy()

        finals_wanted = set(n_grid.tolist())
        run_paths(model, X1, W, visit)
        out = np.empty((3, len(n_grid), len(reps)))
        for j, n in enumerate(n_grid):
            m = _suffix_start(int(n))
            out[0, j] = lp_norm(finals[n] - x, p)
            out[1, j] = lp_norm(prefix[n] / n - x, p)
            out[2, j] = lp_norm((prefix[n] - prefix[m - 1]) / (n - m + 1) - x, p)
        return out

    chunk = max(1, (32 * 2**20) // (8 * n_max * model.noise_width))
    errs = np.concatenate(map_reps(work, N, chunk, threads), axis=2)
    mean = errs.mean(axis=2)
    se = errs.std(axis=2, ddof=1) / math.sqrt(N)
    return SlopeReport(
        n_grid=n_grid,
        err_final=mean[0],
        err_uniform=mean[1],
        err_suffix=mean[2],
        se_uniform=se[1],
        se_suffix=se[2],
        slope_uniform=_loglog_slope(n_grid, mean[1]),
        slope_suffix=_loglog_slope(n_grid, mean[2]),
        slope_final=_loglog_slope(n_grid, mean[0]),
        N=N,
    )


def sa_csv(run: SARun, report: SlopeReport) -> str:
    """Rows n, err_final, err_uniform, err_suffix, bias_bound, C0_over_n."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "err_final", "err_uniform", "err_suffix", "bias_bound", "C0_over_n"])
    linear = isinstance(run.model, LinearSA)
    C0 = bias_constant_C0(run) if linear else math.nan
    for j, n in enumerate(report.n_grid):
        bias = mean_bias_bound(run, int(n)) if linear else math.nan
        w.writerow(
            [
                int(n),
                repr(float(report.err_final[j])),
                repr(float(report.err_uniform[j])),
                repr(float(report.err_suffix[j])),
                repr(float(bias)),
                repr(float(C0 / n)),
            ]
        )
    return buf.getvalue()
