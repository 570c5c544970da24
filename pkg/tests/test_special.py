import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiercheck.special import (
    beta_logpdf,
    beta_quantile,
    check_probability,
    plotting_positions,
    regularized_incomplete_beta,
    regularized_incomplete_beta_array,
    std_normal_cdf,
    std_normal_logpdf,
    std_normal_quantile,
    std_normal_sf,
)

shape = st.floats(min_value=0.05, max_value=200.0)
unit = st.floats(min_value=1e-9, max_value=1 - 1e-9)
# dyadic values k / 2**30 so that 1 - x is exact in binary floating point
dyadic = st.integers(min_value=1, max_value=2**30 - 1).map(lambda k: k / 2**30)


def test_normal_cdf_centre():
    assert std_normal_cdf(0.0) == 0.5


@given(st.floats(min_value=-30, max_value=30))
def test_normal_cdf_symmetry(x):
    assert std_normal_cdf(x) + std_normal_cdf(-x) == pytest.approx(1.0, abs=1e-15)


def test_normal_cdf_oracle(oracle):
    assert abs(std_normal_cdf(1.959964) - 0.975) < 1e-7
    assert std_normal_cdf(1.959964) == pytest.approx(oracle["normal_cdf_1.959964"], abs=1e-14)


def test_normal_tails():
    assert std_normal_cdf(-37.0) > 0.0
    assert std_normal_sf(37.0) == std_normal_cdf(-37.0)
    with pytest.raises(ValueError):
        std_normal_cdf(math.inf)


def test_normal_logpdf():
    assert std_normal_logpdf(0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_normal_quantile_examples(oracle):
    assert std_normal_quantile(0.5) == 0.0
    assert abs(std_normal_quantile(0.975) - 1.959964) < 1e-6
    assert std_normal_quantile(0.975) == pytest.approx(oracle["normal_quantile_0.975"], abs=1e-12)


@given(dyadic)
def test_normal_quantile_antisymmetric(p):
    assert std_normal_quantile(p) == pytest.approx(-std_normal_quantile(1 - p), abs=1e-9)


@given(st.floats(min_value=1e-10, max_value=1 - 1e-10))
def test_normal_quantile_inverts_cdf(p):
    assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_normal_quantile_domain(p):
    with pytest.raises(ValueError):
        std_normal_quantile(p)


@given(shape, shape)
def test_incbeta_endpoints(a, b):
    assert regularized_incomplete_beta(1.0, a, b) == 1.0
    assert regularized_incomplete_beta(0.0, a, b) == 0.0


def test_incbeta_examples(oracle):
    assert regularized_incomplete_beta(0.5, 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert abs(regularized_incomplete_beta(0.3, 2, 5) - oracle["beta_cdf_0.3_2_5"]) < 1e-8


@given(dyadic, shape, shape)
def test_incbeta_reflection(x, a, b):
    lhs = regularized_incomplete_beta(x, a, b)
    rhs = 1.0 - regularized_incomplete_beta(1.0 - x, b, a)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=50)
@given(unit, shape, shape)
def test_incbeta_matches_scipy(x, a, b):
    from scipy.special import betainc

    assert regularized_incomplete_beta(x, a, b) == pytest.approx(betainc(a, b, x), abs=1e-10)


def test_incbeta_array_matches_scalar(rng):
    x = rng.uniform(size=200)
    a = rng.uniform(0.1, 50, size=200)
    b = rng.uniform(0.1, 50, size=200)
    vec = regularized_incomplete_beta_array(x, a, b)
    ref = [regularized_incomplete_beta(*t) for t in zip(x, a, b)]
    np.testing.assert_allclose(vec, ref, atol=1e-13)


@pytest.mark.parametrize("x,a,b", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2)])
def test_incbeta_domain(x, a, b):
    with pytest.raises(ValueError):
        regularized_incomplete_beta(x, a, b)


def test_beta_quantile_examples(oracle):
    assert beta_quantile(0.5, 1, 1) == pytest.approx(0.5, abs=1e-12)
    assert beta_quantile(0.5, 2, 2) == pytest.approx(0.5, abs=1e-12)
    assert abs(beta_quantile(0.25, 2, 5) - oracle["beta_quantile_0.25_2_5"]) < 1e-7


@settings(max_examples=60)
@given(st.floats(min_value=1e-6, max_value=1 - 1e-6), shape, shape)
def test_beta_quantile_round_trip(p, a, b):
    x = beta_quantile(p, a, b)
    assert 0.0 <= x <= 1.0
    if abs(regularized_incomplete_beta(x, a, b) - p) > 1e-9:
        # ill-conditioned near 0 or 1: p must be bracketed within the
        # 4-ulp resolution at which the search stops
        h = 4.0 * math.ulp(x)
        below = regularized_incomplete_beta(max(x - h, 0.0), a, b)
        above = regularized_incomplete_beta(min(x + h, 1.0), a, b)
        assert below <= p + 1e-9 and above >= p - 1e-9


def test_beta_logpdf_uniform():
    assert beta_logpdf(0.37, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_plotting_positions():
    np.testing.assert_allclose(plotting_positions(1), [0.5])
    np.testing.assert_allclose(plotting_positions(2), [0.25, 0.75])
    np.testing.assert_allclose(plotting_positions(4), [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        plotting_positions(0)


def test_check_probability():
    assert check_probability(0.2) == 0.2
    with pytest.raises(ValueError):
        check_probability(1.2)
