import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from emofda.fdcore import (
    BasisExpansion,
    BSplineBasis,
    Curve,
    DomainError,
    MultiChannelCurve,
    SmoothingRankError,
    TimeGrid,
    basis_matrix,
    eval_basis,
    eval_expansion,
    l2_inner_product,
    make_bspline_basis,
    penalty_matrix,
    smooth_curve,
)

from oracles import bspline_design


# ---- grids and curves


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid([0.0])
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        TimeGrid([0.0, 1.5], 1.0)
    g = TimeGrid.uniform(11)
    assert len(g) == 11 and g == TimeGrid(np.linspace(0, 1, 11))
    assert_allclose(g.weights.sum(), 1.0)


def test_arrays_are_read_only():
    g = TimeGrid.uniform(5)
    c = Curve(g, np.arange(5.0))
    with pytest.raises(ValueError):
        c.values[0] = 1.0
    with pytest.raises(ValueError):
        g.points[0] = 0.5


def test_multichannel_access():
    g = TimeGrid.uniform(4)
    m = MultiChannelCurve(g, np.arange(8.0).reshape(2, 4), ("AU01", "AU02"), "v1", 3)
    assert m.n_channels == 2 and m.group == 3
    assert_allclose(m.channel("AU02").values, [4, 5, 6, 7])
    with pytest.raises(KeyError, match="AU45"):
        m.channel("AU45")
    with pytest.raises(ValueError):
        MultiChannelCurve(g, np.zeros((2, 4)), ("a", "a"))
    with pytest.raises(ValueError):
        MultiChannelCurve(g, np.zeros((2, 3)), ("a", "b"))
    again = MultiChannelCurve.from_curves(m.channels, m.channel_labels, "v1", 3)
    assert_allclose(again.values, m.values)


# ---- bases


def test_minimal_cubic_basis():
    b = make_bspline_basis(1.0, 4, 4)
    assert b.interior_knots.size == 0 and b.n_basis == 4
    assert_allclose(eval_basis(b, 0.0), [1, 0, 0, 0])
    assert_allclose(eval_basis(b, 0.5), [0.125, 0.375, 0.375, 0.125], atol=1e-15)
    assert_allclose(eval_basis(b, 1.0), [0, 0, 0, 1])


def test_interior_knots_equally_spaced():
    b = make_bspline_basis(1.0, 10, 4)
    assert_allclose(b.interior_knots, np.arange(1, 7) / 7)


def test_too_few_basis_functions():
    with pytest.raises(ValueError):
        make_bspline_basis(1.0, 3, 4)
    with pytest.raises(ValueError):
        BSplineBasis(4, [0.5, 0.2])


# derivatives only where they are continuous across knots
@pytest.mark.parametrize(
    "order, deriv", [(2, 0), (3, 0), (3, 1), (4, 0), (4, 1), (4, 2), (5, 0), (5, 1), (5, 2)]
)
def test_basis_matches_scipy(order, deriv):
    b = make_bspline_basis(2.0, order + 5, order)
    t = np.linspace(0, 2.0, 57)[:-1]
    assert_allclose(basis_matrix(b, t, deriv), bspline_design(b.knots, order, t, deriv), atol=1e-10)


def test_evaluation_outside_domain():
    b = make_bspline_basis(1.0, 6)
    with pytest.raises(DomainError):
        basis_matrix(b, [1.2])
    with pytest.raises(DomainError):
        eval_expansion(BasisExpansion(b, np.zeros(6)), TimeGrid([0.0, 2.0], 2.0))


@settings(max_examples=60, deadline=None)
@given(
    n_basis=st.integers(4, 25),
    order=st.integers(2, 6),
    t=st.floats(0.0, 3.0, allow_nan=False),
)
def test_partition_of_unity(n_basis, order, t):
    if n_basis < order:
        return
    b = make_bspline_basis(3.0, n_basis, order)
    v = eval_basis(b, t)
    assert np.all(v >= 0)
    assert abs(v.sum() - 1) < 1e-12


def test_penalty_matrix_exact_for_cubic():
    # f = sum c_i B_i with f(t) = t**3 has f'' = 6t, int_0^1 36 t^2 = 12
    b = make_bspline_basis(1.0, 9)
    t = np.linspace(0, 1, 50)
    coef = np.linalg.lstsq(basis_matrix(b, t), t**3, rcond=None)[0]
    assert_allclose(coef @ penalty_matrix(b) @ coef, 12.0, rtol=1e-10)
    R = penalty_matrix(b)
    assert_allclose(R, R.T)
    assert np.linalg.eigvalsh(R).min() > -1e-10


# ---- smoothing


def test_constant_reproduction():
    g = TimeGrid.uniform(30)
    b = make_bspline_basis(1.0, 8)
    for lam in (0.0, 1e-3, 1e3):
        fd = smooth_curve(Curve(g, np.full(30, 2.5)), b, lam)
        assert_allclose(eval_expansion(fd, g).values, 2.5, atol=1e-10)


def test_cubic_polynomial_exact():
    g = TimeGrid.uniform(40)
    t = g.points
    y = 1 - 2 * t + 3 * t**2 - 4 * t**3
    fd = smooth_curve(Curve(g, y), make_bspline_basis(1.0, 12), 0.0)
    assert np.max(np.abs(eval_expansion(fd, g).values - y)) < 1e-8


def test_large_penalty_gives_regression_line():
    rng = np.random.default_rng(0)
    g = TimeGrid.uniform(60)
    t = g.points
    y = np.sin(3 * t) + rng.normal(0, 0.1, t.size)
    fd = smooth_curve(Curve(g, y), make_bspline_basis(1.0, 15), 1e8)
    slope, intercept = np.polyfit(t, y, 1)
    assert_allclose(eval_expansion(fd, g).values, intercept + slope * t, atol=1e-4)


def test_interpolating_round_trip():
    g = TimeGrid.uniform(12)
    rng = np.random.default_rng(1)
    y = rng.normal(size=12)
    fd = smooth_curve(Curve(g, y), make_bspline_basis(1.0, 12), 0.0)
    assert_allclose(eval_expansion(fd, g).values, y, atol=1e-8)


def test_rank_deficient_smoothing():
    g = TimeGrid.uniform(5)
    with pytest.raises(SmoothingRankError):
        smooth_curve(Curve(g, np.zeros(5)), make_bspline_basis(1.0, 10), 0.0)
    # the penalty restores rank
    smooth_curve(Curve(g, np.zeros(5)), make_bspline_basis(1.0, 10), 1e-3)


def test_negative_lambda():
    with pytest.raises(ValueError):
        smooth_curve(Curve(TimeGrid.uniform(5), np.zeros(5)), make_bspline_basis(1.0, 4), -1)


def test_expansion_values():
    b = make_bspline_basis(1.0, 7)
    g = TimeGrid.uniform(21)
    assert_allclose(eval_expansion(BasisExpansion(b, np.zeros(7)), g).values, 0)
    assert_allclose(eval_expansion(BasisExpansion(b, np.ones(7)), g).values, 1, atol=1e-14)


# ---- inner products


def test_inner_product_examples():
    g = TimeGrid.uniform(1001)
    t = g.points
    one = Curve(g, np.ones_like(t))
    assert_allclose(l2_inner_product(one, one), 1.0)
    s, c = Curve(g, np.sin(2 * np.pi * t)), Curve(g, np.cos(2 * np.pi * t))
    assert abs(l2_inner_product(s, c)) < 1e-6
    assert l2_inner_product(s, c) == l2_inner_product(c, s)


def test_inner_product_expansions_and_multichannel():
    b = make_bspline_basis(1.0, 6)
    one = BasisExpansion(b, np.ones(6))
    assert_allclose(l2_inner_product(one, one), 1.0)
    g = TimeGrid.uniform(11)
    m = MultiChannelCurve(g, np.ones((3, 11)), ("a", "b", "c"))
    assert_allclose(l2_inner_product(m, m), 3.0)
    with pytest.raises(ValueError):
        l2_inner_product(Curve(g, np.ones(11)), Curve(TimeGrid.uniform(12), np.ones(12)))
    with pytest.raises(TypeError):
        l2_inner_product(one, Curve(g, np.ones(11)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_inner_product_symmetric(a, b):
    g = TimeGrid.uniform(6)
    ca, cb = Curve(g, np.array(a)), Curve(g, np.array(b))
    assert l2_inner_product(ca, cb) == l2_inner_product(cb, ca)
