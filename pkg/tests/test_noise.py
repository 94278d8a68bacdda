import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.noise import NoiseSpec, lp_norm
from irfbounds.rng import stream


def test_uniform_pm1_g_at_one():
    assert NoiseSpec.uniform_pm1().g([[1.0]], 2.0)[0] == pytest.approx(1.0)


def test_gaussian_g_at_zero_is_folded_mean():
    g = NoiseSpec.gaussian(1.0).g([[0.0]], 2.0)[0]
    assert g == pytest.approx(math.sqrt(2 / math.pi), rel=1e-9)
    draws = np.abs(stream(3, 0).standard_normal(10**6))
    assert abs(draws.mean() - g) < 4 * draws.std() / 1e3


@pytest.mark.parametrize(
    "noise",
    [NoiseSpec.gaussian(0.7), NoiseSpec.bounded_uniform(-1.0, 2.0), NoiseSpec.two_atom(-1.0, 3.0, 0.3)],
    ids=["gauss", "uniform", "two-atom"],
)
def test_g_matches_monte_carlo(noise):
    for y in (0.0, 0.4, 2.5):
        mc = noise.g_mc(y, 2.0, draws=200_000, seed=9)
        assert abs(noise.g([[y]], 2.0)[0] - mc.value) <= 5 * mc.se + 1e-12


@pytest.mark.parametrize(
    "noise",
    [NoiseSpec.gaussian(1.3), NoiseSpec.bounded_uniform(0.0, 2.0), NoiseSpec.uniform_pm1()],
    ids=["gauss", "uniform", "pm1"],
)
def test_g_tail_matches_sampling(noise):
    samples = noise.sample(stream(1, 0), 200_000)
    g = noise.g(samples, 2.0)
    for y in (0.5, 1.0, 2.0):
        emp = float(np.mean(g > y))
        se = math.sqrt(max(emp * (1 - emp), 1e-6) / len(g))
        assert abs(noise.g_tail(y, 2.0) - emp) < 5 * se + 1e-3


def test_moments_of_uniform_pm1():
    n = NoiseSpec.uniform_pm1()
    assert n.g_moment(2.0, 2.0).value == pytest.approx(1.0)
    assert n.g_sup(2.0) == pytest.approx(1.0)
    assert n.diameter(2.0) == pytest.approx(2.0)


def test_gaussian_bernstein_constants_dominate_moments():
    noise = NoiseSpec.gaussian(1.0)
    H1, A1, _ = noise.bernstein_constants(2.0)
    for k in range(2, 8):
        Ek = noise.g_moment(float(k), 2.0).value
        assert Ek <= math.factorial(k) / 2 * H1 ** (k - 2) * A1


def test_multivariate_gaussian_moment_is_flagged():
    est = NoiseSpec.gaussian(1.0, d=2).g_moment(2.0, 2.0)
    assert est.estimated and est.se > 0


@given(st.integers(1, 4), st.sampled_from([1.0, 2.0, math.inf]))
def test_lp_norm_triangle(d, p):
    rng = stream(d, int(p) if math.isfinite(p) else 99)
    a, b = rng.standard_normal((2, d))
    assert lp_norm(a + b, p) <= lp_norm(a, p) + lp_norm(b, p) + 1e-12


@pytest.mark.parametrize("kw", [{"kind": "GaussianIid", "sigma": 0.0}, {"kind": "TwoAtom", "a": 1, "b": 2, "pr": 1.0}])
def test_invalid_laws_rejected(kw):
    with pytest.raises(ValueError):
        NoiseSpec(**kw)
