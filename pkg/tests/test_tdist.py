import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from prbi.tdist import t_sf, t_upper_quantile

# Published two-sided critical values t_{q}(df).
TABLE = [
    (0.005, 9, 3.2498),
    (0.005, 1, 63.657),
    (0.025, 9, 2.2622),
    (0.025, 30, 2.0423),
    (0.05, 4, 2.1318),
]


@pytest.mark.parametrize("q,df,expected", TABLE)
def test_table_values(q, df, expected):
    assert t_upper_quantile(q, df) == pytest.approx(expected, abs=6e-4)


def _mp_upper_tail(t: float, df: float) -> float:
    """Independent oracle: integrate the t density from t to infinity."""
    mpmath.mp.dps = 30
    nu = mpmath.mpf(df)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    pdf = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)  # noqa: E731
    return float(mpmath.quad(pdf, [t, mpmath.inf]))


@pytest.mark.parametrize("q,df", [(0.005, 9), (0.01, 3), (0.1, 2), (0.3, 17)])
def test_quantile_against_quadrature(q, df):
    t = t_upper_quantile(q, df)
    assert _mp_upper_tail(t, df) == pytest.approx(q, rel=1e-8)


@given(st.floats(1e-6, 0.999999), st.integers(1, 200))
def test_quantile_matches_scipy(q, df):
    assert t_upper_quantile(q, df) == pytest.approx(stats.t.isf(q, df), rel=1e-8, abs=1e-8)


@given(st.floats(-30, 30), st.floats(0.5, 100))
def test_sf_matches_scipy(t, df):
    assert t_sf(t, df) == pytest.approx(stats.t.sf(t, df), rel=1e-9, abs=1e-12)


@given(st.floats(1e-5, 0.49), st.integers(1, 60))
def test_sf_inverts_quantile(q, df):
    assert t_sf(t_upper_quantile(q, df), df) == pytest.approx(q, rel=1e-8)


@given(st.floats(0.49, 0.4999999), st.integers(1, 100))
def test_quantile_near_median(q, df):
    assert t_upper_quantile(q, df) == pytest.approx(stats.t.isf(q, df), rel=1e-7)


def test_symmetry_and_median():
    assert t_upper_quantile(0.5, 7) == 0.0
    assert t_upper_quantile(0.9, 7) == pytest.approx(-t_upper_quantile(0.1, 7))
    assert t_sf(0.0, 5) == pytest.approx(0.5)


def test_large_df_tends_to_normal():
    assert t_upper_quantile(0.025, 1e6) == pytest.approx(1.959964, abs=1e-5)


@pytest.mark.parametrize("q,df", [(0.0, 3), (1.0, 3), (0.1, 0), (0.1, -2)])
def test_domain_errors(q, df):
    with pytest.raises(ValueError):
        t_upper_quantile(q, df)


def test_sf_domain_error():
    with pytest.raises(ValueError):
        t_sf(1.0, 0)
    assert math.isfinite(t_sf(1e6, 1))
