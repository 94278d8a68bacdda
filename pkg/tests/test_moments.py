import math

import pytest
from hypothesis import given, strategies as st

from irfbounds.moments import mz_moment_bound, vbe_moment_bound


def test_mz_examples():
    assert mz_moment_bound(4.25, 1, 2) == pytest.approx(math.sqrt(4.25))
    assert mz_moment_bound(0.0, 3, 4) == 0.0
    assert mz_moment_bound(1.0, 16, 2) == pytest.approx(4.0)


def test_vbe_examples():
    assert vbe_moment_bound(3.5, 1, 1) == pytest.approx(3.5)
    assert vbe_moment_bound(0.0, 2, 1.5) == 0.0
    assert vbe_moment_bound(1.0, 4, 2) == pytest.approx(2.0)


@pytest.mark.parametrize("fn, q", [(mz_moment_bound, 1.5), (vbe_moment_bound, 2.5), (vbe_moment_bound, 0.5)])
def test_q_ranges(fn, q):
    with pytest.raises(ValueError):
        fn(1.0, 1, q)


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(1, 64), st.floats(2, 8))
def test_mz_monotone_in_T(a, b, d, q):
    lo, hi = sorted((a, b))
    assert mz_moment_bound(lo, d, q) <= mz_moment_bound(hi, d, q)


@given(st.floats(0, 1e6), st.integers(1, 64), st.integers(1, 64), st.floats(1, 2))
def test_vbe_monotone_in_d(v, d1, d2, q):
    lo, hi = sorted((d1, d2))
    assert vbe_moment_bound(v, lo, q) <= vbe_moment_bound(v, hi, q) * (1 + 1e-12)
