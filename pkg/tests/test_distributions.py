import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankauction import (BimodalIrregular, DomainError, PiecewiseLinearQuantile, TruncatedExponential, Uniform01,
                         distribution_from_dict, ironed_revenue_curve, is_regular, revenue_at, value_at,
                         virtual_value)
from rankauction.hull import gift_wrap_upper_hull, upper_concave_envelope, upper_hull_indices

from conftest import brute_upper_envelope

FAMILIES = [Uniform01(), TruncatedExponential(1.0), TruncatedExponential(3.0), BimodalIrregular(),
            PiecewiseLinearQuantile([(0, 0.1), (0.3, 0.2), (0.6, 0.7), (1, 0.9)])]


# --- value_at -------------------------------------------------------------------

def test_value_at_examples(uniform, plq):
    assert value_at(uniform, 0.5) == 0.5
    assert value_at(uniform, 0.0) == 0.0
    assert value_at(plq, 0.25) == pytest.approx(0.1, abs=1e-15)


@pytest.mark.parametrize("q", [-0.1, 1.1, np.nan])
def test_value_at_domain(uniform, q):
    with pytest.raises(DomainError):
        value_at(uniform, q)


@pytest.mark.parametrize("d", FAMILIES, ids=repr)
def test_values_monotone_bounded_continuous(d):
    q = np.linspace(0, 1, 1001)
    v = d.v(q)
    assert np.all(np.diff(v) >= -1e-12)
    assert v.min() >= 0 and v.max() <= 1
    dq = 1e-9
    assert np.max(np.abs(d.v(np.clip(q + dq, 0, 1)) - v)) < 1e-6


def test_truncated_exponential_is_conditional_quantile():
    d = TruncatedExponential(2.0)
    v = np.linspace(0, 1, 11)
    cdf = (1 - np.exp(-2 * v)) / (1 - np.exp(-2))
    assert np.allclose(d.v(cdf), v, atol=1e-12)


# --- revenue curves -----------------------------------------------------------------

def test_revenue_examples(uniform):
    rc = uniform.revenue_curve()
    assert revenue_at(rc, 0.5) == 0.25
    assert revenue_at(rc, 1.0) == 0.0
    assert revenue_at(rc, 0.25) == 0.1875


@pytest.mark.parametrize("d", FAMILIES, ids=repr)
def test_revenue_curve_invariants(d):
    rc = d.revenue_curve()
    assert rc.R(0.0) == 0.0 and rc.R(1.0) == 0.0
    q = np.linspace(0.001, 0.999, 999)
    assert np.allclose(rc.R(q), d.v(q) * (1 - q), atol=0, rtol=0)
    assert np.all(rc.R(q) >= 0)


def test_virtual_value_examples(uniform):
    rc = uniform.revenue_curve()
    assert virtual_value(rc, 0.5) == pytest.approx(0.0, abs=1e-15)
    assert virtual_value(rc, 0.75) == pytest.approx(0.5)
    assert virtual_value(rc, 0.25) == pytest.approx(-0.5)


@pytest.mark.parametrize("d", [Uniform01(), TruncatedExponential(0.5), TruncatedExponential(2.5)], ids=repr)
def test_virtual_value_matches_finite_difference(d):
    rc = d.revenue_curve()
    h = 1e-5
    q = np.linspace(0.01, 0.99, 99)
    fd = -(rc.R(q + h) - rc.R(q - h)) / (2 * h)
    assert np.max(np.abs(rc.virtual_value(q) - fd)) < 1e-6


def test_finite_difference_fallback_near_boundary():
    class Square(Uniform01):
        family = "square"

        def _v(self, q):
            return np.asarray(q, dtype=float) ** 2

        _v_prime = Uniform01.__mro__[1]._v_prime  # base-class finite differences

    d = Square()
    q = np.array([0.0, 0.3, 1.0])
    # one-sided at the boundary: slope over [0, h] and [1 - h, 1]
    assert np.allclose(d.v_prime(q), [1e-5, 0.6, 2 - 1e-5], atol=1e-9)


# --- regularity and ironing ------------------------------------------------------------

def test_is_regular_examples(uniform, texp, bimodal):
    assert is_regular(uniform.revenue_curve())
    assert is_regular(texp.revenue_curve())
    assert not is_regular(bimodal.revenue_curve())


def test_ironed_curve_regular_is_identity(uniform):
    irc = ironed_revenue_curve(uniform.revenue_curve(), G=257)
    assert np.array_equal(irc.R_bar, irc.R_grid)
    assert irc.intervals == ()


def test_three_point_concave_input_unchanged():
    env, _ = upper_concave_envelope([0, 0.5, 1], [0, 0.1, 0])
    assert np.array_equal(env, [0, 0.1, 0])


def test_ironed_bimodal_matches_bruteforce(bimodal):
    irc = ironed_revenue_curve(bimodal.revenue_curve(), G=129)
    oracle = brute_upper_envelope(irc.grid, irc.R_grid)
    assert np.allclose(irc.R_bar, oracle, atol=1e-14)
    assert irc.intervals, "the dip must be ironed"
    lo, hi = irc.intervals[0]
    inside = (irc.grid > lo) & (irc.grid < hi)
    assert np.any(irc.R_bar[inside] > irc.R_grid[inside])
    # linear across the bridge
    assert np.allclose(np.diff(irc.R_bar[inside], 2), 0, atol=1e-12)


@pytest.mark.parametrize("d", FAMILIES, ids=repr)
def test_ironed_curve_invariants(d):
    irc = ironed_revenue_curve(d.revenue_curve(), G=512)
    assert np.all(irc.R_bar >= irc.R_grid - 1e-15)
    assert np.all(np.diff(irc.R_bar, 2) <= 1e-12)
    _, vertices = upper_concave_envelope(irc.grid, irc.R_grid)
    assert np.array_equal(irc.R_bar[vertices], irc.R_grid[vertices])


def test_ironed_curve_minimality(bimodal, rng):
    irc = ironed_revenue_curve(bimodal.revenue_curve(), G=512)
    for i in rng.integers(1, irc.grid.size - 1, 100):
        lowered = irc.R_bar.copy()
        lowered[i] -= 1e-9
        concave = np.all(np.diff(lowered, 2) <= 1e-15)
        majorant = np.all(lowered >= irc.R_grid)
        assert not (concave and majorant)


def test_ironed_exclude_top(bimodal):
    n = 4
    irc = ironed_revenue_curve(bimodal.revenue_curve(), G=512, exclude_top=True, n=n)
    top = irc.grid > 1 - 1 / n
    assert np.array_equal(irc.R_bar[top], irc.R_grid[top])
    with pytest.raises(DomainError):
        ironed_revenue_curve(bimodal.revenue_curve(), exclude_top=True)
    with pytest.raises(DomainError):
        ironed_revenue_curve(bimodal.revenue_curve(), G=8)


def test_ironed_virtual_value_nonincreasing(bimodal):
    irc = ironed_revenue_curve(bimodal.revenue_curve(), G=4096)
    q = np.linspace(0.001, 0.999, 2000)
    phi = irc.ironed_virtual_value(q)
    assert np.all(np.diff(phi) >= -1e-9)


# --- hull ------------------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=40))
def test_monotone_chain_matches_references(ys):
    x = np.arange(len(ys), dtype=float)
    y = np.asarray(ys)
    env, idx = upper_concave_envelope(x, y)
    assert np.allclose(env, brute_upper_envelope(x, y), atol=1e-9)
    assert np.array_equal(idx, upper_hull_indices(x, y))
    if len(ys) > 1:
        # gift wrapping keeps no collinear middle points either
        assert np.allclose(np.interp(x, x[gift_wrap_upper_hull(x, y)], y[gift_wrap_upper_hull(x, y)]), env,
                           atol=1e-9)


def test_hull_rejects_unsorted():
    with pytest.raises(ValueError):
        upper_hull_indices([0, 2, 1], [0, 0, 0])


# --- construction from config blocks ------------------------------------------------------

@pytest.mark.parametrize("d", FAMILIES, ids=repr)
def test_distribution_roundtrip(d):
    assert distribution_from_dict(d.to_dict()) == d


@pytest.mark.parametrize("knots", [[(0, 0)], [(0.1, 0), (1, 1)], [(0, 0.5), (1, 0.2)], [(0, 0), (1, 1.5)],
                                   [(0, 0), (0.5, 0.1), (0.5, 0.2), (1, 1)]])
def test_piecewise_linear_validation(knots):
    with pytest.raises(DomainError):
        PiecewiseLinearQuantile(knots)


def test_unknown_family():
    with pytest.raises(DomainError):
        distribution_from_dict({"family": "lognormal"})
