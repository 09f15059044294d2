import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from emofda.fdist import FDist, betainc, f_cdf, f_pdf, f_quantile, f_sf

from oracles import f_cdf_quad, f_quantile_quad


def test_cdf_at_zero():
    assert f_cdf(FDist(3, 7), 0.0) == 0.0
    assert f_sf(FDist(3, 7), 0.0) == 1.0


@pytest.mark.parametrize("df", [1, 2, 5, 31, 200])
def test_equal_df_median_is_one(df):
    assert abs(f_cdf(FDist(df, df), 1.0) - 0.5) < 1e-10


def test_known_quantiles_against_quadrature():
    # reference values from numerical integration of the density
    for (d1, d2), expected in [((1, 31), 4.1596), ((2, 10), 4.1028)]:
        q = f_quantile(FDist(d1, d2), 0.95)
        assert abs(q - expected) < 1e-3
        assert abs(q - f_quantile_quad(0.95, d1, d2)) < 1e-8
    assert abs(f_cdf(FDist(1, 31), 4.1596) - 0.95) < 1e-4


@pytest.mark.parametrize("d1, d2", [(1, 1), (1, 31), (2, 10), (7, 40), (30, 3), (0.5, 2.5)])
@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 2.5, 9.0, 60.0])
def test_cdf_matches_quadrature(d1, d2, x):
    assert abs(f_cdf(FDist(d1, d2), x) - f_cdf_quad(x, d1, d2)) < 1e-9


def test_betainc_against_scipy():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.uniform(0.1, 50, 2)
        x = rng.uniform()
        assert abs(betainc(a, b, x) - special.betainc(a, b, x)) < 1e-11
    assert betainc(2, 3, 0.0) == 0.0 and betainc(2, 3, 1.0) == 1.0


def test_pdf_integrates_to_cdf_differences():
    d = FDist(4, 12)
    x = np.linspace(0.5, 1.5, 2001)
    area = np.trapezoid([f_pdf(d, v) for v in x], x)
    assert abs(area - (f_cdf(d, 1.5) - f_cdf(d, 0.5))) < 1e-7


def test_cdf_plus_sf():
    d = FDist(3, 9)
    for x in (0.1, 1.0, 5.0, 50.0):
        assert abs(f_cdf(d, x) + f_sf(d, x) - 1) < 1e-14


def test_invalid_arguments():
    with pytest.raises(ValueError):
        FDist(0, 3)
    with pytest.raises(ValueError):
        f_quantile(FDist(1, 3), 1.0)
    with pytest.raises(ValueError):
        f_quantile(FDist(1, 3), 0.0)
    with pytest.raises(ValueError):
        f_cdf(FDist(1, 3), -1.0)
    with pytest.raises(ValueError):
        betainc(1, 1, 1.5)


@settings(max_examples=100, deadline=None)
@given(
    d1=st.integers(1, 60),
    d2=st.integers(1, 200),
    x=st.floats(1e-3, 200.0),
)
def test_quantile_inverts_cdf(d1, d2, x):
    dist = FDist(d1, d2)
    p = f_cdf(dist, x)
    if not 1e-10 < p < 1 - 1e-10:
        return
    # rounding p to a double moves the exact inverse by up to eps / pdf(x)
    conditioning = 4 * np.finfo(float).eps / f_pdf(dist, x)
    assert abs(f_quantile(dist, p) - x) <= 1e-8 * max(1.0, x) + conditioning


def test_round_trip_lattice():
    worst = 0.0
    for d1 in (1, 2, 3, 5, 10, 20, 31, 60, 100, 300):
        for d2 in (2, 5, 10, 31, 100):
            dist = FDist(d1, d2)
            for p in (0.01, 0.5, 0.95):
                worst = max(worst, abs(f_cdf(dist, f_quantile(dist, p)) - p))
    assert worst < 1e-9
