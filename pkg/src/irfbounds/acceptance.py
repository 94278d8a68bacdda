"""The acceptance suite, shared by the test module and ``irfbounds selftest``.

Each check returns a ``Criterion`` carrying its verdict, a one-line detail,
the wall time and the time budget.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import envelopes as env
from .chains import InitSpec, derive_constants, make_model
from .coefficients import (
    BoundKind,
    MomentConstants,
    asymptotics_report,
    compute_K,
    constants_bernstein,
    constants_fuk_nagaev,
    constants_hoeffding,
    constants_mcdiarmid,
    constants_mz,
    constants_semiexp,
    constants_vbe,
    constants_vbe_moment,
    constants_weak,
)
from .envelopes import NotApplicableError
from .erm import ERMProblem, excess_risk_experiment
from .moments import mz_moment_bound, vbe_moment_bound
from .montecarlo import check_domination, enumerate_exact_tail, estimate_moment_norm, estimate_tail
from .noise import NoiseSpec
from .rng import derive_seed, stream
from .sa import SARun, bias_constant_C0, exact_average_bias, mean_bias_bound, mean_error_path, slope_experiment
from .schedules import make_schedule

__all__ = ["Criterion", "CANONICAL", "canonical_schedule", "model_envelopes", "CHECKS", "run_all"]


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float = math.inf
    data: dict = field(default_factory=dict, repr=False)

    @property
    def in_time(self) -> bool:
        return self.seconds <= self.limit

    @property
    def ok(self) -> bool:
        return self.passed and self.in_time

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        budget = "" if math.isinf(self.limit) else f" / {self.limit:g}s"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s{budget})"


# canonical schedules: (alpha, rho, eta)
CANONICAL = {"C15": (0.5, 0.5, 1.0), "C16": (0.25, 0.5, 1.0), "C17": (0.75, 0.5, 1.0)}


def canonical_schedule(regime: str):
    a, r, e = CANONICAL[regime]
    return make_schedule(regime, a, r, e)


def model_envelopes(model, n: int, kinds=None, semi_q: float = 0.5) -> list:
    """Every applicable envelope for ``model`` at horizon n, with constants
    derived from its noise law. Inapplicable kinds are skipped."""
    table = compute_K(model.schedule(n), n)
    d, p, K1 = model.d, model.p, table.K1n
    init = model.init.tail_spec(p)
    out = []

    def add(fn):
        try:
            out.extend(fn())
        except NotApplicableError:
            pass

    kinds = set(kinds or [k.value for k in BoundKind if k not in (BoundKind.MZ, BoundKind.VBE_MOMENT)])
    if "Bernstein" in kinds:
        bc = constants_bernstein(table, derive_constants(model, "Bernstein"))
        add(lambda: [env.bernstein_envelope(bc, d, p, K1, init, f) for f in ("refined", "relaxed")])
    if "FukNagaev" in kinds:
        for q in (2.0, 4.0):
            mc = derive_constants(model, "FukNagaev", q)
            add(lambda: [env.fuk_nagaev_envelope(constants_fuk_nagaev(table, mc, q), d, p, K1, init)])
    if "VBE" in kinds:
        for q in (1.5, 2.0):
            mc = derive_constants(model, "VBE", q)
            add(lambda: [env.vbe_envelope(constants_vbe(table, mc, q), d, p, K1, init)])
    if "WeakMoment" in kinds:
        mc = derive_constants(model, "WeakMoment", 1.5)
        add(lambda: [env.weak_envelope(constants_weak(table, mc, 1.5), d, p, K1, init)])
    if "McDiarmid" in kinds:

        def mcd():
            bc = constants_mcdiarmid(table, derive_constants(model, "McDiarmid"))
            return [env.mcdiarmid_envelope(bc, d, p, K1, init, form=f) for f in ("rio", "power", "gauss")]

        add(mcd)
    if "Hoeffding" in kinds:
        mc = derive_constants(model, "Hoeffding")
        bc = constants_hoeffding(table, mc)
        if mc.T is not None:
            add(lambda: [env.hoeffding_envelope(bc, d, p, K1, init, T=mc.T, form=f) for f in ("H", "bennett", "bernstein")])
        elif model.d == 1:
            noise = model.noise
            m = n - 1

            def max_tail(y):
                return min(1.0, m * noise.g_tail(y, p))

            add(lambda: [env.hoeffding_envelope(bc, d, p, K1, init, max_tail=max_tail)])
    if "SemiExp" in kinds:

        def semi():
            mc = derive_constants(model, "SemiExp", semi_q)
            return [env.semiexp_envelope(constants_semiexp(table, mc, semi_q), d, p, K1, init)]

        add(semi)
    return out


# ---------------------------------------------------------------------------
# criteria


def _direct_K(rho: np.ndarray, n: int) -> np.ndarray:
    """K_{k,n} = sum_{j=k}^n prod_{i=k+1}^j rho_i for k = 1..n (rho indexed from 2)."""
    rho = np.asarray(rho, dtype=float)[: n - 1]
    # row k-1 holds rho_{k+1}, ..., rho_n followed by zeros
    k = np.arange(n)[:, None]
    j = np.arange(n - 1)[None, :]
    idx = k + j
    M = np.where(idx < n - 1, rho[np.minimum(idx, n - 2)], 0.0)
    return 1.0 + np.cumprod(M, axis=1).sum(axis=1)


def acc1_coefficient_oracle(seed: int = 1) -> Criterion:
    rng = stream(seed, 1)
    worst = 0.0
    for _ in range(100):
        regime = ["C15", "C16", "C17"][rng.integers(3)]
        lo = 0.0 if regime == "C15" else 0.01
        hi = 1.0 if regime == "C17" else 0.99
        s = make_schedule(regime, rng.uniform(lo, hi), rng.uniform(0.01, 0.99), rng.uniform(0.1, 3.0))
        for n in range(2, 51):
            K = compute_K(s, n).K
            D = _direct_K(s.sequences(n)[0], n)
            worst = max(worst, float(np.max(np.abs(K - D) / np.abs(D))))
    return Criterion(1, "K backward recurrence vs direct series", worst <= 1e-12, f"max rel err {worst:.2e}")


def _ex1_scalar(noise, rho=0.5):
    return make_model("FunctionalAR", noise, InitSpec.point([0.0]), p=2.0, R=[[rho]], g=[0.0])


def _exact_setup(n: int = 12):
    model = _ex1_scalar(NoiseSpec.two_atom(-1.0, 1.0))
    top = enumerate_exact_tail(model, n, [0.0]).meta["max_norm"]
    grid = np.linspace(top / 50.0, 1.05 * top, 50)
    return model, enumerate_exact_tail(model, n, grid)


def acc2_exact_domination() -> Criterion:
    n = 12
    model, tail = _exact_setup(n)
    envs = model_envelopes(
        model, n, kinds=["Bernstein", "FukNagaev", "VBE", "WeakMoment", "McDiarmid", "Hoeffding"]
    )
    reports = [check_domination(tail, e) for e in envs]
    failed = [r.kind for r in reports if not r.passed]
    want = 2 + 2 + 2 + 1 + 3 + 3
    ok = not failed and len(envs) == want and abs(tail.meta["total_probability"] - 1.0) < 1e-14
    detail = f"{len(envs)} envelopes x {len(tail.x_grid)} thresholds over {tail.N} paths"
    detail += f", violations in {failed}" if failed else ", zero violations"
    return Criterion(2, "exact domination, TwoAtom chain n=12", ok, detail, data={"reports": reports})


ACC3_MODELS = {
    # regime -> (example, alpha); scalar A = 0.5, gamma = 1, Gaussian noise
    "C15": ("LinearSA", 0.5),
    "C16": ("LinearSAAdditive", 0.25),
    "C17": ("LinearSAScaledNoise", 0.75),
}


def acc3_model(regime: str):
    ex, alpha = ACC3_MODELS[regime]
    return make_model(ex, NoiseSpec.gaussian(1.0), InitSpec.point([0.0]), p=2.0, A=[[0.5]], B=[0.0], gamma=1.0, alpha=alpha)


def acc3_mc_domination(seed: int = 3, threads: int = 1, n: int = 200, N: int = 20000) -> Criterion:
    failed, count, informative = [], 0, 0
    for regime in ACC3_MODELS:
        model = acc3_model(regime)
        tail = estimate_tail(model, n, N, derive_seed(seed, regime), threads=threads)
        for e in model_envelopes(model, n):
            r = check_domination(tail, e)
            count += 1
            informative += int(np.sum(r.bound < 1.0))
            if not r.passed:
                failed.append(f"{regime}/{r.kind}")
    detail = f"{count} envelope checks, {informative} informative thresholds"
    detail += f", violations in {failed}" if failed else ", zero violations"
    return Criterion(3, "MC domination, three regimes n=200 N=2e4", not failed, detail)


def _bernstein_env_for(regime: str, n: int):
    s = canonical_schedule(regime)
    table = compute_K(s, n)
    mc = MomentConstants(H1=1.0, A1=1.0)
    bc = constants_bernstein(table, mc)
    return env.bernstein_envelope(bc, 1, 2.0, table.K1n, env.InitialTailSpec.deterministic())


def acc4_regime_ordering(n: int = 1000) -> Criterion:
    e15, e16, e17 = (_bernstein_env_for(r, n) for r in ("C15", "C16", "C17"))
    u = np.geomspace(1.0, 1e6, 400)
    b15, b16, b17 = e15(u), e16(u), e17(u)
    informative = (b15 < 1.0) & (b15 > 1e-300)
    ok = bool(np.any(informative)) and bool(
        np.all(b16[informative] >= b15[informative]) and np.all(b17[informative] <= b15[informative])
    )
    return Criterion(
        4,
        "Bernstein ordering C16 >= C15 >= C17 at n=1000",
        ok,
        f"{int(informative.sum())} informative thresholds checked",
    )


def acc5_asymptotics() -> Criterion:
    grid = [100, 1000, 10000]
    parts, ok = [], True
    for regime in ("C15", "C16", "C17"):
        rep = asymptotics_report(canonical_schedule(regime), grid)
        lo, hi = rep.ratio_range()
        klo, khi = rep.ratio_range(rep.K1n)
        if regime == "C15":
            good = (max(rep.statistic) / min(rep.statistic) - 1.0) < 0.10
        else:
            good = 0.5 <= lo and hi <= 2.0
        good = good and 0.5 <= klo and khi <= 2.0 and rep.log_product_ok
        ok = ok and good
        parts.append(f"{regime} stat ratio [{lo:.3f},{hi:.3f}] K1n ratio [{klo:.3f},{khi:.3f}]")
    return Criterion(5, "coefficient asymptotics", ok, "; ".join(parts))


def acc6_models():
    planar = make_model(
        "LinearSA",
        NoiseSpec.uniform_pm1(2),
        InitSpec.point([0.0, 0.0]),
        p=2.0,
        A=[[1.0, 0.2], [0.2, 0.6]],
        B=[0.5, -0.5],
        gamma=0.5,
        alpha=0.5,
    )
    additive = make_model(
        "LinearSAAdditive", NoiseSpec.gaussian(1.0), InitSpec.point([0.0]), p=2.0, A=[[0.5]], B=[0.0], gamma=1.0, alpha=0.25
    )
    return {"LinearSA-2d": planar, "Additive": additive}


def acc6_moment_bounds(seed: int = 6, threads: int = 1, n: int = 200, N: int = 10**4) -> Criterion:
    ok, parts = True, []
    for name, model in acc6_models().items():
        table = compute_K(model.schedule(n), n)
        for q in (2.0, 4.0, 1.0):
            est = estimate_moment_norm(model, n, N, q, derive_seed(seed, f"{name}-{q}"), threads=threads)
            bounds = []
            if q >= 2:
                bc = constants_mz(table, derive_constants(model, "MZ", q), q)
                bounds.append(("MZ", mz_moment_bound(bc.Tq, model.d, q)))
            if q <= 2:
                bc = constants_vbe_moment(table, derive_constants(model, "VBEMoment", q), q)
                bounds.append(("vBE", vbe_moment_bound(bc.Vq, model.d, q)))
            for tag, b in bounds:
                good = est.ucb_99 <= b
                ok = ok and good
                parts.append(f"{name} {tag} q={q:g}: {est.ucb_99:.3g}<={b:.3g}")
    return Criterion(6, "moment bounds vs MC", ok, "; ".join(parts))


def acc7_models(seed: int = 7):
    rng = stream(seed, 70)
    out = []
    for _ in range(20):
        a = rng.uniform(0.5, 2.0)
        gamma = rng.uniform(0.1, 0.9) / a
        alpha = rng.uniform(0.0, 0.75)
        b = rng.uniform(-2.0, 2.0)
        x1 = rng.uniform(-3.0, 3.0)
        m = make_model(
            "LinearSA", NoiseSpec.gaussian(1.0), InitSpec.point([x1]), p=2.0, A=[[a]], B=[b], gamma=gamma, alpha=alpha
        )
        out.append(SARun.linear(m))
    return out


SLOPE_GRID = [100, 200, 400, 800, 1600, 3200, 6400]


def slope_run():
    m = make_model(
        "LinearSA", NoiseSpec.gaussian(1.0), InitSpec.point([0.0]), p=2.0, A=[[1.0]], B=[1.0], gamma=0.5, alpha=0.5
    )
    return SARun.linear(m)


def acc7_averaging(seed: int = 7, threads: int = 1, N: int = 2000) -> Criterion:
    worst = 0.0
    for run in acc7_models(seed):
        n = np.arange(1, 1001)
        bias = exact_average_bias(run, 1000)
        C0 = bias_constant_C0(run)
        worst = max(worst, float(np.max(bias * n / C0)))
        mb = np.array([mean_bias_bound(run, int(k)) for k in range(2, 1001)])
        em = np.abs(mean_error_path(run, 1000)[1:, 0])
        worst = max(worst, float(np.max(em / mb)))
    a_ok = worst <= 1.0 + 1e-12
    rep = slope_experiment(slope_run(), SLOPE_GRID, N, derive_seed(seed, "slope"), threads)
    b_ok = -0.6 <= rep.slope_uniform <= -0.4
    c_ok = -0.6 <= rep.slope_suffix <= -0.4
    detail = (
        f"(a) max bias/(C0/n) and mean/bound ratio {worst:.3f}; "
        f"(b) uniform slope {rep.slope_uniform:.3f}; (c) suffix slope {rep.slope_suffix:.3f}"
    )
    return Criterion(7, "averaging bias and rates", a_ok and b_ok and c_ok, detail, data={"slope": rep})


def acc8_analytic_orderings() -> Criterion:
    x = np.linspace(0.005, 0.995, 100)
    ls = env.ell_star(x)
    mid = (x**2 - 2 * x) * np.log1p(-x)
    a = bool(np.all(ls >= mid - 1e-9) and np.all(mid >= 2 * x**2 - 1e-9))
    xs = np.geomspace(0.01, 50.0, 20)
    vs = np.geomspace(0.1, 10.0, 20)
    X, V = np.meshgrid(xs, vs)
    H = env.hoeffding_H(X, V, 100)
    Be = env.bennett_B(X, V)
    B1 = env.bernstein_B1(X, V)
    b = bool(np.all(H <= Be * (1 + 1e-12)) and np.all(Be <= B1 * (1 + 1e-12)))
    return Criterion(
        8,
        "ell* and Hoeffding/Bennett/Bernstein orderings",
        a and b,
        f"ell* chain {'ok' if a else 'broken'} on 100 points; H<=Bennett<=Bernstein {'ok' if b else 'broken'} on 20x20",
    )


def acc9_erm(seed: int = 9, threads: int = 1) -> Criterion:
    rep = excess_risk_experiment(ERMProblem(alpha=0.25), [250, 1000, 4000], 20, derive_seed(seed, "erm"), threads)
    ok = rep.median_decreasing and rep.n_dominated >= 18
    med = ", ".join(f"{m:.2e}" for m in rep.median)
    return Criterion(
        9,
        "ERM excess risk",
        ok,
        f"medians [{med}], envelope holds in {rep.n_dominated}/20 repetitions",
        data={"report": rep},
    )


def acc10_negative_control() -> Criterion:
    _, tail = _exact_setup(12)

    def fake(u):
        return 0.5 * np.interp(u, tail.x_grid, tail.p_hat)

    r = check_domination(tail, fake)
    informative = tail.p_hat > 0
    flagged_all = bool(np.all(~r.verdicts[informative]))
    return Criterion(
        10,
        "negative control: half-tail envelope must FAIL",
        (not r.passed) and flagged_all,
        f"verdict {r.verdict}, {len(r.violations)}/{int(informative.sum())} informative thresholds flagged",
    )


CHECKS: list[tuple[Callable[..., Criterion], float, bool]] = [
    # (check, time budget in seconds, accepts seed/threads)
    (acc1_coefficient_oracle, 1.0, False),
    (acc2_exact_domination, 5.0, False),
    (acc3_mc_domination, 60.0, True),
    (acc4_regime_ordering, math.inf, False),
    (acc5_asymptotics, 5.0, False),
    (acc6_moment_bounds, 30.0, True),
    (acc7_averaging, 90.0, True),
    (acc8_analytic_orderings, math.inf, False),
    (acc9_erm, 180.0, True),
    (acc10_negative_control, math.inf, False),
]


def run_check(index: int, seed=None, threads: int = 1) -> Criterion:
    fn, limit, takes = CHECKS[index]
    kwargs = {}
    if takes:
        kwargs["threads"] = threads
        if seed is not None:
            kwargs["seed"] = derive_seed(seed, fn.__name__)
    t0 = time.perf_counter()
    crit = fn(**kwargs)
    crit.seconds = time.perf_counter() - t0
    crit.limit = limit
    return crit


def run_all(seed=None, threads: int = 1, report: Callable[[str], None] = print) -> list[Criterion]:
    out = []
    for i in range(len(CHECKS)):
        c = run_check(i, seed, threads)
        if report:
            report(c.line())
        out.append(c)
    return out
