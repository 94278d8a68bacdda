import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.erm import (
    ERMProblem,
    covering_ok,
    empirical_risk,
    empirical_risk_grid,
    envelope_shape,
    erm_csv,
    erm_fit,
    exact_risk_grid,
    excess_risk_experiment,
    population_risk,
    simulate_chain,
)
from irfbounds.rng import stream

QUIET = ERMProblem(sigma=0.0, x1=3.0)


def test_hand_example():
    assert empirical_risk(0.5, [1.0, 0.5], alpha=0.0) == 0.0


def test_noiseless_true_parameter_has_zero_risk():
    X = simulate_chain(QUIET, 50, stream(0, 0))
    assert empirical_risk(QUIET.theta0, X, QUIET.alpha) == pytest.approx(0.0, abs=1e-15)
    assert population_risk(QUIET.theta0, QUIET, 50, 5, seed=0).value == pytest.approx(0.0, abs=1e-15)


def test_noiseless_fit_is_nearest_grid_point():
    X = simulate_chain(QUIET, 40, stream(0, 0))
    grid = np.linspace(0.1, 0.9, 17)
    assert erm_fit(QUIET, X, grid) == pytest.approx(0.5)
    assert erm_fit(QUIET, X, [0.3]) == 0.3


def test_grid_spacing():
    p = ERMProblem()
    for n in (10, 250, 4000):
        g = p.grid(n)
        assert np.max(np.diff(g)) <= 1 / n + 1e-15
        assert g[0] == p.theta_lo and g[-1] == p.theta_hi


@given(st.integers(0, 10_000))
def test_fit_minimizes_empirical_risk(seed):
    p = ERMProblem()
    X = simulate_chain(p, 60, stream(seed, 0))
    g = p.grid(60)
    r = empirical_risk_grid(g, X, p.alpha)
    th = erm_fit(p, X)
    assert empirical_risk(th, X, p.alpha) <= r.min() + 1e-12
    assert th == g[np.flatnonzero(r == r.min())[0]]


@given(st.integers(0, 10_000))
def test_empirical_risk_convex_in_theta(seed):
    p = ERMProblem()
    X = simulate_chain(p, 40, stream(seed, 1))
    r = empirical_risk_grid(np.linspace(0.1, 0.9, 81), X, p.alpha)
    assert np.all(np.diff(r, 2) >= -1e-12)


def test_grid_risk_matches_pointwise():
    p = ERMProblem()
    X = simulate_chain(p, 30, stream(2, 0))
    g = p.grid(30)
    np.testing.assert_allclose(empirical_risk_grid(g, X, p.alpha), [empirical_risk(t, X, p.alpha) for t in g], rtol=1e-12)


def test_exact_risk_matches_monte_carlo():
    p = ERMProblem(x1=1.0)
    exact = exact_risk_grid(p, 40, [0.2, 0.5, 0.9])
    for th, ref in zip([0.2, 0.5, 0.9], exact):
        est = population_risk(th, p, 40, 4000, seed=3)
        assert abs(est.value - ref) < 4 * est.se


def test_population_risk_prefers_truth():
    p = ERMProblem(x1=2.0)
    far = population_risk(0.9, p, 200, 10_000, seed=1)
    true = population_risk(0.5, p, 200, 10_000, seed=1)
    assert far.value > true.value
    again = population_risk(0.5, p, 200, 10_000, seed=2)
    assert abs(again.value - true.value) < 2 * math.hypot(again.se, true.se) + 1e-4


def test_covering_bookkeeping():
    p = ERMProblem()
    assert all(covering_ok(p, n) for n in range(4, 5000, 37))


def test_noiseless_excess_is_zero():
    rep = excess_risk_experiment(ERMProblem(sigma=0.0, x1=1.0), [20, 40], N=3, seed=0)
    assert np.all(rep.excess == 0.0)


def test_excess_risk_decays():
    rep = excess_risk_experiment(ERMProblem(), [250, 1000, 4000], N=20, seed=9, threads=4)
    assert rep.median[-1] <= rep.median[0]
    assert rep.n_dominated >= 18
    spread = np.median(np.abs(rep.theta_hat - 0.5), axis=0)
    assert spread[-1] < spread[0]
    assert erm_csv(rep).splitlines()[0] == "n,excess_median,excess_q10,excess_q90,fitted_envelope"
    np.testing.assert_allclose(rep.envelope, rep.C_hat * envelope_shape(rep.n_grid, 0.25))


@pytest.mark.parametrize("kw", [{"alpha": 0.5}, {"theta0": 0.95}, {"theta_lo": 0.0}, {"sigma": -1.0}])
def test_invalid_problems(kw):
    with pytest.raises(ValueError):
        ERMProblem(**kw)
