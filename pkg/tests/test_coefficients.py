import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.coefficients import (
    BoundKind,
    MissingConstantError,
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
    log_product_bound,
    weak_constant,
)
from irfbounds.schedules import make_schedule


def table(rho, tau, xi=None):
    """Coefficient table for a custom schedule; entries are indexed from n=2."""
    xi = [0.0] * len(tau) if xi is None else xi
    s = make_schedule("Custom", custom=(rho, tau, xi))
    return compute_K(s, len(rho) + 1)


def direct_K(rho, n):
    """K_{k,n} = sum_{j=k}^{n} prod_{i=k+1}^{j} rho_i, summed without the recurrence."""
    out = []
    for k in range(1, n + 1):
        total = 0.0
        for j in range(k, n + 1):
            total += math.prod(rho[i - 2] for i in range(k + 1, j + 1))
        out.append(total)
    return np.array(out)


ONE = table([0.0], [1.0])  # n=2, K[2]=1, tau_2=1, xi_2=0
ZERO = table([0.3, 0.3, 0.3], [0.0] * 3)


def test_zero_contraction_gives_unit_K():
    t = table([0.0] * 5, [1.0] * 5)
    assert np.all(t.K == 1.0)


def test_three_step_example():
    t = compute_K(make_schedule("Custom", custom=([0.5, 0.5], [1, 1], [0, 0])), 3)
    assert t.K.tolist() == [1.75, 1.5, 1.0]


@given(st.lists(st.floats(0.0, 0.999), min_size=1, max_size=30))
def test_recurrence_matches_direct_sum(rho):
    n = len(rho) + 1
    t = table(rho, [1.0] * len(rho))
    assert t.K[-1] == 1.0
    np.testing.assert_allclose(t.K, direct_K(rho, n), rtol=1e-12)


@given(st.lists(st.floats(0.0, 0.999), min_size=1, max_size=30))
def test_K_at_least_one_and_bounded_by_geometric_sum(rho):
    t = table(rho, [1.0] * len(rho))
    assert np.all(t.K >= 1.0)
    assert np.all(t.K <= 1.0 / (1.0 - max(rho)) + 1e-9)


def test_csv_has_header_and_rows():
    lines = ONE.to_csv().splitlines()
    assert lines[0] == "k,K_kn,tau_k,xi_k,rho_k"
    assert len(lines) == 3


def test_bernstein_example():
    bc = constants_bernstein(ONE, MomentConstants(H1=1.0, A1=1.0))
    assert (bc.V2, bc.delta) == (8.0, 2.0)


def test_bernstein_noiseless():
    bc = constants_bernstein(ZERO, MomentConstants(H1=1.0, A1=1.0))
    assert (bc.V2, bc.delta) == (0.0, 0.0)


def test_bernstein_missing_constant_named():
    with pytest.raises(MissingConstantError, match="H1"):
        constants_bernstein(ONE, MomentConstants(A1=1.0))


def test_semiexp_examples():
    mc = MomentConstants(A1_semi=1.0, Eexp_q=math.e)
    assert constants_semiexp(ONE, mc, 0.5).V2 == pytest.approx(2 * math.e)
    assert constants_semiexp(ZERO, mc, 0.5).V2 == 0.0
    xi_only = table([0.0], [0.0], [1.0])
    assert constants_semiexp(xi_only, mc, 0.5).V2 == pytest.approx(2 * math.e**2)


def test_semiexp_needs_q_below_one():
    with pytest.raises(ValueError):
        constants_semiexp(ONE, MomentConstants(A1_semi=1.0, Eexp_q=1.0), 1.0)


@given(st.lists(st.floats(0.0, 0.99), min_size=1, max_size=10), st.floats(0.1, 3.0))
def test_fuk_nagaev_q2_has_H_equal_V2(rho, a1):
    t = table(rho, [0.7] * len(rho), [0.2] * len(rho))
    bc = constants_fuk_nagaev(t, MomentConstants(A1=a1, noise_moments={2: a1}), 2.0)
    assert bc.Hq == pytest.approx(bc.V2, rel=1e-12)


def test_fuk_nagaev_q3_example():
    bc = constants_fuk_nagaev(ONE, MomentConstants(A1=1.0, noise_moments={3: 2.0}), 3.0)
    assert bc.Hq == pytest.approx(8.0)


def test_fuk_nagaev_noiseless():
    bc = constants_fuk_nagaev(ZERO, MomentConstants(A1=1.0, noise_moments={2: 1.0}), 2.0)
    assert bc.Hq == bc.V2 == 0.0


def test_vbe_examples():
    assert constants_vbe(ONE, MomentConstants(noise_moments={2: 1.0}), 2.0).Vq == pytest.approx(2.0)
    assert constants_vbe(ZERO, MomentConstants(noise_moments={2: 1.0}), 2.0).Vq == 0.0


@given(st.lists(st.floats(0.0, 0.99), min_size=2, max_size=10))
def test_vbe_q1_simplifies(rho):
    tau, xi = [0.5] * len(rho), [0.1] * len(rho)
    t = table(rho, tau, xi)
    bc = constants_vbe(t, MomentConstants(noise_moments={1: 1.3}), 1.0)
    K = t.K_tail
    terms = K * (0.5 * 1.3 + 0.1)
    assert bc.Vq == pytest.approx(terms[0] + 2 * terms[1:].sum(), rel=1e-12)


def test_weak_examples():
    mc = MomentConstants(weak_moments={1.5: 1.0})
    assert constants_weak(ONE, mc, 1.5).Bq == pytest.approx(2**1.5)
    assert constants_weak(ZERO, mc, 1.5).Bq == 0.0
    assert weak_constant(1, 1.5) == pytest.approx(79.196, abs=1e-3)


@pytest.mark.parametrize("q", [1.0, 2.0])
def test_weak_rejects_endpoints(q):
    with pytest.raises(ValueError):
        weak_constant(1, q)


def test_mcdiarmid_examples():
    bc = constants_mcdiarmid(ONE, MomentConstants(T1=2.0))
    assert (bc.D, bc.V2) == (2.0, 4.0)
    assert constants_mcdiarmid(ZERO, MomentConstants(T1=2.0)).D == 0.0
    t = table([0.2, 0.5], [1.0, 1.0])
    assert t.K_tail.tolist() == [1.5, 1.0]
    bc = constants_mcdiarmid(t, MomentConstants(T1=1.0))
    assert bc.D == pytest.approx(2.5) and bc.V2 == pytest.approx(3.25)


def test_hoeffding_examples():
    bc = constants_hoeffding(ONE, MomentConstants(A1=1.0))
    assert (bc.V2, bc.delta) == (2.0, 1.0)
    assert constants_hoeffding(ZERO, MomentConstants(A1=1.0)).delta == 0.0
    xi_only = table([0.0], [0.0], [3.0])
    assert constants_hoeffding(xi_only, MomentConstants(A1=1.0)).delta == 3.0


def test_mz_examples():
    t = table([0.5], [1.0])
    assert t.K.tolist() == [1.5, 1.0]
    mc = MomentConstants(noise_moments={2: 1.0}, init_moments={2: 1.0})
    assert constants_mz(t, mc, 2.0).Tq == pytest.approx(4.25)
    assert constants_mz(table([0.5, 0.5], [0.0, 0.0]), mc, 2.0).Tq == pytest.approx(1.75**2)


def test_vbe_moment_examples():
    t = table([0.5], [1.0])
    mc = MomentConstants(noise_moments={1: 1.0, 2: 1.0}, init_moments={1: 1.0, 2: 1.0})
    assert constants_vbe_moment(t, mc, 1.0).Vq == pytest.approx(3.5)
    assert constants_vbe_moment(t, mc, 2.0).Vq == pytest.approx(4.25)
    assert constants_vbe_moment(table([0.5], [0.0]), mc, 2.0).Vq == pytest.approx(1.5**2)


def test_kind_tags():
    assert constants_mz(table([0.5], [1.0]), MomentConstants(noise_moments={2: 1}, init_moments={2: 1}), 2).kind is BoundKind.MZ


@pytest.mark.parametrize(
    "regime, alpha",
    [("C15", 0.5), ("C16", 0.25), ("C17", 0.75)],
)
def test_asymptotic_statistics_stay_bounded(regime, alpha):
    rep = asymptotics_report(make_schedule(regime, alpha, 0.5, 1.0), [100, 1000, 10000])
    lo, hi = rep.ratio_range()
    assert 0.5 <= lo and hi <= 2.0
    assert rep.log_product_ok and rep.log_product_checked > 0


def test_asymptotics_rejects_custom():
    with pytest.raises(ValueError):
        asymptotics_report(make_schedule("Custom", custom=([0.5], [1.0], [0.0])), [10])


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.99), st.integers(1, 200), st.integers(1, 200))
def test_log_product_bound_dominates(rho, alpha, k, l):
    i = np.arange(k + 1, k + l + 1, dtype=float)
    actual = float(np.sum(np.log(1.0 - rho / i**alpha)))
    assert actual <= log_product_bound(rho, alpha, k, l) + 1e-12


def test_log_product_with_inverse_square_factor_is_too_strong():
    rho, alpha, k, l = 0.5, 0.5, 1, 999
    i = np.arange(k + 1, k + l + 1, dtype=float)
    actual = float(np.sum(np.log(1.0 - rho / i**alpha)))
    too_strong = -rho * (l - 1) / ((1 - alpha) ** 2 * (k + l) ** alpha)
    assert actual > too_strong
    assert actual <= log_product_bound(rho, alpha, k, l)
