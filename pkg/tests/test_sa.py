import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.chains import InitSpec, make_model, mean_path
from irfbounds.noise import NoiseSpec
from irfbounds.sa import (
    SARun,
    bias_constant_C0,
    bias_rate,
    exact_average_bias,
    final_iterate_constant,
    mean_bias_bound,
    mean_error_path,
    run_sa,
    sa_csv,
    slope_experiment,
)

QUIET = NoiseSpec.two_atom(0.0, 0.0)


def linear(noise=QUIET, x1=0.0, **kw):
    params = dict(A=1.0, B=1.0, gamma=0.5, alpha=0.0)
    params.update(kw)
    return SARun.linear(make_model("LinearSA", noise, init=InitSpec.point([x1]), **params))


def test_fixed_point_has_zero_error():
    run = linear(x1=1.0, alpha=0.5)
    for n in (2, 10, 100):
        r = run_sa(run, n, seed=0)
        assert r.err_final == r.err_uniform == r.err_suffix == 0.0


def test_geometric_recursion():
    run = linear()
    for n in (2, 5, 30):
        assert run_sa(run, n, seed=0).X_final[0] == pytest.approx(1 - 0.5 ** (n - 1), abs=1e-15)


def test_same_seed_same_result():
    run = linear(noise=NoiseSpec.gaussian(1.0), alpha=0.5)
    a, b = run_sa(run, 50, seed=4), run_sa(run, 50, seed=4)
    assert a.err_uniform == b.err_uniform and np.array_equal(a.X_hat, b.X_hat)


def test_suffix_average_is_mean_of_second_half():
    run = linear(noise=NoiseSpec.gaussian(1.0), alpha=0.5)
    from irfbounds.chains import simulate

    traj = simulate(run.model, 9, seed=2)
    r = run_sa(run, 9, seed=2)
    np.testing.assert_allclose(r.X_hat, traj[3:].mean(axis=0), rtol=1e-14)
    np.testing.assert_allclose(r.X_bar, traj.mean(axis=0), rtol=1e-14)


def test_x_star_must_solve_system():
    m = make_model("LinearSA", QUIET, A=1.0, B=1.0)
    with pytest.raises(ValueError):
        SARun(m, (0.5,))


def test_C0_vanishes_at_fixed_point_and_geometric_value():
    assert bias_constant_C0(linear(x1=1.0)) == 0.0
    run = linear()
    assert bias_rate(run.model) == pytest.approx(0.5)
    assert bias_constant_C0(run) == pytest.approx(1 + 1 / (1 - math.exp(-0.5)), rel=1e-12)


def test_mean_bias_bound_examples():
    run = linear()
    assert mean_bias_bound(run, 2) == pytest.approx(1.0)
    assert mean_bias_bound(run, 12) == pytest.approx(math.exp(-5), rel=1e-12)
    assert final_iterate_constant(run, 12) == pytest.approx(12 * math.exp(-5), rel=1e-12)


def test_mean_bias_bound_against_monte_carlo():
    run = linear(noise=NoiseSpec.gaussian(1.0), alpha=0.5, x1=-2.0)
    n, N = 100, 100_000
    from irfbounds.chains import draw_paths, run_paths

    X1, W = draw_paths(run.model, n, 7, range(N))
    Xn = run_paths(run.model, X1, W)[:, 0]
    se = Xn.std(ddof=1) / math.sqrt(N)
    assert abs(Xn.mean() - run.x[0]) <= mean_bias_bound(run, n) + 4 * se


@st.composite
def configs(draw):
    lam = draw(st.floats(0.2, 3.0))
    gamma = draw(st.floats(0.05, 1.0)) / lam
    alpha = draw(st.floats(0.0, 0.9))
    return dict(A=lam, B=draw(st.floats(-2, 2)), gamma=gamma, alpha=alpha), draw(st.floats(-3, 3))


@given(configs())
def test_exact_mean_within_bias_bounds(cfg):
    params, x1 = cfg
    run = linear(x1=x1, **params)
    n = 1000
    err = np.abs(mean_error_path(run, n)[:, 0])
    bound = np.array([mean_bias_bound(run, k) for k in range(2, n + 1)])
    assert np.all(err[1:] <= bound * (1 + 1e-9) + 1e-300)
    avg = exact_average_bias(run, n)
    C0 = bias_constant_C0(run)
    k = np.arange(2, n + 1)
    assert np.all(avg[1:] <= C0 / k * (1 + 1e-9) + 1e-300)


def test_error_path_agrees_with_mean_recursion():
    run = linear(x1=-1.0, alpha=0.3)
    np.testing.assert_allclose(mean_error_path(run, 50)[:, 0], mean_path(run.model, 50)[:, 0] - 1.0, atol=1e-14)


def test_uniform_and_suffix_rates():
    run = linear(noise=NoiseSpec.gaussian(1.0), alpha=0.5)
    rep = slope_experiment(run, [100, 200, 400, 800, 1600], N=800, seed=1, threads=2)
    assert -0.6 <= rep.slope_uniform <= -0.4
    assert -0.6 <= rep.slope_suffix <= -0.4
    lines = sa_csv(run, rep).splitlines()
    assert lines[0] == "n,err_final,err_uniform,err_suffix,bias_bound,C0_over_n"
    assert len(lines) == 6


def test_slope_experiment_thread_invariant():
    run = linear(noise=NoiseSpec.gaussian(1.0), alpha=0.5)
    a = slope_experiment(run, [10, 20], N=50, seed=3, threads=1)
    b = slope_experiment(run, [10, 20], N=50, seed=3, threads=3)
    assert np.array_equal(a.err_uniform, b.err_uniform)
