import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irfbounds.coefficients import BoundConstants, BoundKind
from irfbounds.envelopes import (
    InitialTailSpec,
    NotApplicableError,
    bennett_B,
    bernstein_B1,
    bernstein_envelope,
    ell,
    ell_star,
    fuk_nagaev_envelope,
    hoeffding_H,
    hoeffding_envelope,
    i1_term,
    mcdiarmid_envelope,
    semiexp_envelope,
    vbe_envelope,
    weak_envelope,
)

DET = InitialTailSpec.deterministic()


def bc(kind, **kw):
    return BoundConstants(kind, kw.pop("n", 10), **kw)


def test_i1_examples():
    assert i1_term(5.0, 1.0, 1, DET) == 0.0
    assert i1_term(2.0, 1.0, 1, InitialTailSpec.exp_tail(1.0)) == pytest.approx(math.exp(-1))
    assert i1_term(4.0, 1.0, 2, InitialTailSpec.poly_tail(1.0, 2.0)) == pytest.approx(0.5)
    bounded = InitialTailSpec.bounded(1.0)
    assert i1_term(2.5, 1.0, 1, bounded) == 0.0 and i1_term(1.5, 1.0, 1, bounded) == 1.0


def test_bernstein_relaxed_example():
    env = bernstein_envelope(bc(BoundKind.BERNSTEIN, V2=1.0, delta=1.0), 1, 2.0, 1.0, DET, form="relaxed")
    assert env(10.0) == pytest.approx(2 * math.exp(-25 / 12), rel=1e-12)
    assert env(0.0) == 1.0


def test_bernstein_noiseless_is_I1_only():
    env = bernstein_envelope(bc(BoundKind.BERNSTEIN, V2=0.0, delta=0.0), 1, 2.0, 1.0, DET)
    assert env(1e-6) == 0.0


def test_semiexp_example():
    env = semiexp_envelope(bc(BoundKind.SEMIEXP, V2=1.0, delta=1.0, q=0.5), 1, 2.0, 1.0, DET)
    comp = env.components(4.0)
    assert comp["martingale"][0] == pytest.approx(4 * math.exp(-4 / (2 * (1 + 2**1.5))), rel=1e-12)
    assert math.exp(-4 / (2 * (1 + 2**1.5))) == pytest.approx(math.exp(-0.5224), rel=1e-4)
    assert env(1e-9) == 1.0


def test_semiexp_small_variance_not_applicable():
    with pytest.raises(NotApplicableError):
        semiexp_envelope(bc(BoundKind.SEMIEXP, V2=0.25, delta=0.1, q=0.5), 1, 2.0, 1.0, DET)


def test_fuk_nagaev_example():
    env = fuk_nagaev_envelope(bc(BoundKind.FUK_NAGAEV, V2=1.0, Hq=1.0, q=2.0), 1, 2.0, 1.0, DET)
    expected = 0.32 + 2 * math.exp(-100 / (32 * math.e**2))
    assert env.components(10.0)["martingale"][0] == pytest.approx(expected, rel=1e-12)
    assert env(10.0) == 1.0
    assert 100 / (32 * math.e**2) == pytest.approx(0.4230, abs=1e-4)
    assert env(1e9) < 1e-15


def test_fuk_nagaev_noiseless():
    env = fuk_nagaev_envelope(bc(BoundKind.FUK_NAGAEV, V2=0.0, Hq=0.0, q=2.0), 1, 2.0, 1.0, DET)
    assert env(0.5) == 0.0


def test_vbe_example():
    env = vbe_envelope(bc(BoundKind.VBE, Vq=1.0, q=2.0), 1, 2.0, 1.0, DET)
    assert env(4.0) == pytest.approx(0.25)
    assert vbe_envelope(bc(BoundKind.VBE, Vq=0.0, q=1.0), 1, 2.0, 1.0, DET)(3.0) == 0.0


def test_weak_example():
    env = weak_envelope(bc(BoundKind.WEAK, Bq=1.0, q=1.5), 1, 2.0, 1.0, DET)
    assert env(100.0) == pytest.approx(0.0792, abs=1e-4)
    assert weak_envelope(bc(BoundKind.WEAK, Bq=0.0, q=1.5), 1, 2.0, 1.0, DET)(3.0) == 0.0


def test_threshold_conversion_uses_dimension():
    env = vbe_envelope(bc(BoundKind.VBE, Vq=1.0, q=2.0), 4, 2.0, 1.0, DET)
    # u = 8 maps to x = 8 / 2 = 4, so the value is 4 * 4 * 1 / 16
    assert env(8.0) == pytest.approx(1.0)
    assert env.x_of(8.0) == pytest.approx(4.0)
    inf_env = vbe_envelope(bc(BoundKind.VBE, Vq=1.0, q=2.0), 4, math.inf, 1.0, DET)
    assert inf_env.x_of(8.0) == 8.0


def test_ell_star_values():
    assert ell_star(0.0) == 0.0
    assert ell_star(0.5) >= 0.75 * math.log(2) - 1e-15
    assert ell_star(1.0) == math.inf
    x = np.arange(1, 10) / 10
    assert np.all(ell_star(x) >= 2 * x**2)


@given(st.floats(0.01, 0.98))
def test_ell_star_is_a_supremum(x):
    t = np.geomspace(1e-3, 1e3, 2000)
    assert ell_star(x) >= np.max(x * t - ell(t)) - 1e-9


def test_ell_nonnegative():
    assert np.all(ell(np.geomspace(1e-4, 50, 500)) >= -1e-12)


def test_mcdiarmid_examples():
    c = bc(BoundKind.MCDIARMID, D=2.0, V2=4.0)
    gauss = mcdiarmid_envelope(c, 1, 2.0, 1.0, DET, form="gauss")
    assert gauss.components(2.0)["martingale"][0] == pytest.approx(2 * math.exp(-0.5))
    assert gauss(2.0) == 1.0
    rio = mcdiarmid_envelope(c, 1, 2.0, 1.0, DET)
    assert rio.components(4.0)["martingale"][0] == 0.0
    assert rio(4.5) == 0.0


def test_mcdiarmid_needs_bounded_init():
    with pytest.raises(NotApplicableError):
        mcdiarmid_envelope(bc(BoundKind.MCDIARMID, D=1.0, V2=1.0), 1, 2.0, 1.0, InitialTailSpec.exp_tail(1.0))


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_mcdiarmid_forms_are_nested(D, V2):
    c = bc(BoundKind.MCDIARMID, D=D, V2=V2)
    u = np.linspace(0.0, 2 * D, 50)
    m = {f: mcdiarmid_envelope(c, 1, 2.0, 1.0, DET, form=f).components(u)["martingale"] for f in ("rio", "power", "gauss")}
    assert np.all(m["rio"] <= m["power"] * (1 + 1e-9) + 1e-300)
    assert np.all(m["power"] <= m["gauss"] * (1 + 1e-9) + 1e-300)


def test_hoeffding_H_boundaries():
    assert hoeffding_H(0.0, 1.3, 7) == pytest.approx(1.0)
    for n, v in [(5, 1.0), (10, 0.5), (3, 2.0)]:
        expected = (v**2 / (n + v**2)) ** ((n + v**2) * n / (n + v**2))
        assert hoeffding_H(float(n), v, n) == pytest.approx(expected, rel=1e-12)
    assert hoeffding_H(5.5, 1.0, 5) == 0.0


@given(st.floats(0.0, 50.0), st.floats(0.05, 5.0), st.integers(1, 60))
def test_hoeffding_relaxations_ordered(x, v, n):
    if x > n:
        return
    h, b, b1 = hoeffding_H(x, v, n), bennett_B(x, v), bernstein_B1(x, v)
    assert h <= b * (1 + 1e-9) + 1e-300
    assert b <= b1 * (1 + 1e-9) + 1e-300


def test_hoeffding_bounded_case_matches_formula():
    c = bc(BoundKind.HOEFFDING, n=20, V2=4.0, delta=0.5)
    env = hoeffding_envelope(c, 1, 2.0, 1.0, DET, T=1.0)
    x = 3.0
    expected = 2 * hoeffding_H(x / (2 * 2 * 0.5), 2.0 / (2 * 0.5), 20)
    assert env.components(x)["martingale"][0] == pytest.approx(expected, rel=1e-12)


def test_hoeffding_general_case_adds_tail():
    c = bc(BoundKind.HOEFFDING, n=20, V2=4.0, delta=0.5)
    env = hoeffding_envelope(c, 1, 2.0, 1.0, DET, max_tail=lambda y: 0.0)
    bounded = hoeffding_envelope(c, 1, 2.0, 1.0, DET, T=100.0)
    u = np.linspace(0.1, 40, 30)
    assert np.all(env(u) <= bounded(u) + 1e-12)
    with pytest.raises(ValueError):
        hoeffding_envelope(c, 1, 2.0, 1.0, DET)


def _all_envelopes():
    yield bernstein_envelope(bc(BoundKind.BERNSTEIN, V2=3.0, delta=0.7), 2, 2.0, 2.0, InitialTailSpec.exp_tail(1.0))
    yield bernstein_envelope(bc(BoundKind.BERNSTEIN, V2=3.0, delta=0.7), 2, 2.0, 2.0, DET, form="relaxed")
    yield semiexp_envelope(bc(BoundKind.SEMIEXP, V2=3.0, delta=0.7, q=0.4), 1, 2.0, 2.0, DET)
    yield fuk_nagaev_envelope(bc(BoundKind.FUK_NAGAEV, V2=3.0, Hq=5.0, q=3.0), 3, 1.0, 2.0, DET)
    yield vbe_envelope(bc(BoundKind.VBE, Vq=3.0, q=1.5), 1, 2.0, 2.0, InitialTailSpec.poly_tail(1.0, 2.0))
    yield weak_envelope(bc(BoundKind.WEAK, Bq=3.0, q=1.2), 1, 2.0, 2.0, DET)
    for form in ("rio", "power", "gauss"):
        yield mcdiarmid_envelope(bc(BoundKind.MCDIARMID, D=5.0, V2=3.0), 1, 2.0, 2.0, InitialTailSpec.bounded(1.0), form=form)
    yield hoeffding_envelope(bc(BoundKind.HOEFFDING, V2=3.0, delta=0.7), 1, 2.0, 2.0, DET, T=2.0)
    yield hoeffding_envelope(
        bc(BoundKind.HOEFFDING, V2=3.0, delta=0.7), 1, 2.0, 2.0, DET, max_tail=lambda y: math.exp(-y)
    )


@pytest.mark.parametrize("env", list(_all_envelopes()), ids=lambda e: e.tag)
def test_envelopes_clamped_and_nonincreasing(env):
    u = np.linspace(0.0, 3 * env.n, 1000)
    v = env(u)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v) <= 1e-12)


@given(st.floats(0.01, 10), st.floats(0.0, 5), st.floats(0.0, 100))
def test_bernstein_refined_below_relaxed(V2, delta, u):
    c = bc(BoundKind.BERNSTEIN, V2=V2, delta=delta)
    refined = bernstein_envelope(c, 1, 2.0, 1.0, DET).components(u)["martingale"][0]
    relaxed = bernstein_envelope(c, 1, 2.0, 1.0, DET, form="relaxed").components(u)["martingale"][0]
    assert refined <= relaxed * (1 + 1e-12) + 1e-300


def test_underflow_is_flagged():
    env = bernstein_envelope(bc(BoundKind.BERNSTEIN, V2=1e-3, delta=1e-3), 1, 2.0, 1.0, DET)
    comp = env.components(1e3)
    assert comp["martingale"][0] == 0.0 and comp["underflow"][0]


def test_csv_columns():
    env = vbe_envelope(bc(BoundKind.VBE, Vq=1.0, q=2.0), 1, 2.0, 1.0, DET)
    lines = env.to_csv([1.0, 2.0]).splitlines()
    assert lines[0] == "u,x,bound_total,bound_I1,bound_martingale,form_tag"
    assert lines[1].endswith("VBE:q=2")
