import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.chains import FunctionalSpec, InitSpec, make_model, sum_covariance
from irfbounds.montecarlo import (
    check_domination,
    clopper_pearson,
    cp_noncoverage,
    enumerate_exact_tail,
    estimate_moment_norm,
    estimate_tail,
    map_reps,
)
from irfbounds.noise import NoiseSpec

PM1 = NoiseSpec.uniform_pm1()
GAUSS = NoiseSpec.gaussian(1.0)


def two_atom_chain():
    return make_model("FunctionalAR", NoiseSpec.two_atom(-1.0, 1.0), R=0.5)


def test_two_step_enumeration_by_hand():
    t = enumerate_exact_tail(two_atom_chain(), 2, [0.5, 1.0, 1.5])
    assert t.p_hat.tolist() == [1.0, 1.0, 0.0]
    assert t.meta["total_probability"] == pytest.approx(1.0, abs=1e-14)


def test_enumeration_normalized_and_monotone():
    m = make_model("FunctionalAR", PM1, R=0.6)
    u = np.linspace(0, 10, 60)
    t = enumerate_exact_tail(m, 12, u)
    assert abs(t.meta["total_probability"] - 1) < 1e-14
    assert np.all(np.diff(t.p_hat) <= 0)
    assert enumerate_exact_tail(m, 12, [t.meta["max_norm"] * 1.01]).p_hat[0] == 0.0


def test_enumeration_blowup_names_count():
    with pytest.raises(ValueError, match=str(2**30)):
        enumerate_exact_tail(make_model("FunctionalAR", PM1, R=0.5), 31, [1.0])


def test_noiseless_tail_is_zero():
    m = make_model("FunctionalAR", NoiseSpec.two_atom(0.0, 0.0), R=0.5, init=InitSpec.point([1.0]))
    t = estimate_tail(m, 10, 1000, seed=1, x_grid=[0.0, 1e-9, 1.0])
    assert t.counts.tolist() == [1000, 0, 0]


def test_counts_at_zero_equal_N_and_bands_ordered():
    m = make_model("LinearSA", GAUSS, A=1.0, gamma=0.5, alpha=0.5)
    t = estimate_tail(m, 50, 2000, seed=5)
    u = np.concatenate([[0.0], t.x_grid])
    t0 = estimate_tail(m, 50, 2000, seed=5, x_grid=u)
    assert t0.counts[0] == 2000
    assert np.all(np.diff(t0.counts) <= 0)
    assert np.all((t0.p_lcb_99 <= t0.p_hat) & (t0.p_hat <= t0.p_ucb_99))
    assert np.all((0 <= t0.p_lcb_99) & (t0.p_ucb_99 <= 1))


def test_three_sigma_tail_of_scalar_linear_sa():
    m = make_model("LinearSA", GAUSS, A=1.0, gamma=0.5, alpha=0.5)
    n = 200
    sd = math.sqrt(sum_covariance(m, n)[0, 0])
    t = estimate_tail(m, n, 20_000, seed=2, x_grid=[3 * sd])
    assert 0.001 < t.p_hat[0] < 0.02


def test_results_do_not_depend_on_threads():
    m = make_model("LinearSA", GAUSS, A=1.0, gamma=0.5, alpha=0.5)
    a = estimate_tail(m, 40, 3000, seed=8, threads=1)
    b = estimate_tail(m, 40, 3000, seed=8, threads=4)
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.x_grid, b.x_grid)


def test_pilot_centering_for_nonlinear_functional():
    m = make_model("FunctionalAR", GAUSS, R=0.5)
    f = FunctionalSpec("SumOfNorms")
    t = estimate_tail(m, 20, 1000, seed=3, f=f)
    assert t.centering == "pilot" and t.centering_error > 0
    with pytest.raises(ValueError):
        estimate_tail(m, 20, 1000, seed=3, f=f, pilot_seed=3)


def test_small_N_rejected():
    with pytest.raises(ValueError):
        estimate_tail(two_atom_chain(), 5, 999, seed=0)


def test_moment_estimates():
    m = make_model("LinearSA", GAUSS, A=1.0, gamma=0.5, alpha=0.5)
    n = 60
    a = estimate_moment_norm(m, n, 10_000, 2.0, seed=1)
    b = estimate_moment_norm(m, n, 10_000, 2.0, seed=2)
    assert abs(a.estimate - b.estimate) < 2 * math.hypot(a.se, b.se)
    assert a.estimate**2 <= sum_covariance(m, n)[0, 0] + 3 * a.se
    assert a.ucb_99 > a.estimate and a.heuristic
    quiet = make_model("FunctionalAR", NoiseSpec.two_atom(0.0, 0.0), R=0.5)
    assert estimate_moment_norm(quiet, 10, 10_000, 2.0, seed=0).estimate == 0.0


def test_domination_checks():
    m = make_model("FunctionalAR", PM1, R=0.5)
    t = enumerate_exact_tail(m, 10, np.linspace(0.1, 8, 30))
    assert check_domination(t, lambda u: np.ones_like(u)).passed
    informative = t.p_hat > 0
    half = check_domination(t, lambda u: 0.5 * t.p_hat)
    assert not half.passed and len(half.violations) == informative.sum()


def test_domination_metadata_mismatch():
    class Env:
        n, d, p = 99, 1, 2.0

        def __call__(self, u):
            return np.ones_like(u)

    t = enumerate_exact_tail(make_model("FunctionalAR", PM1, R=0.5), 5, [1.0])
    with pytest.raises(ValueError, match="n"):
        check_domination(t, Env())


@pytest.mark.parametrize("p", [0.01, 0.1])
def test_clopper_pearson_coverage(p):
    lo, hi = cp_noncoverage(p, 1000, 20_000, seed=4)
    assert lo <= 0.015 and hi <= 0.015


@given(st.integers(1, 500), st.integers(0, 500))
def test_clopper_pearson_brackets_estimate(N, k):
    k = min(k, N)
    lo, hi = clopper_pearson(k, N)
    assert 0 <= lo <= k / N <= hi <= 1


@given(st.integers(1, 200), st.integers(1, 50), st.integers(1, 4))
def test_map_reps_preserves_order(N, chunk, threads):
    out = np.concatenate(map_reps(lambda r: r * 2, N, chunk, threads))
    assert np.array_equal(out, 2 * np.arange(N))
