import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bisect_root, expanded_function, richardson_taylor, sympy_taylor
from pdvol.model import sigma_derivatives
from pdvol import (DomainError, ModelParams, drift_b, expansion_coefficients, sigma,
                   sigma_tilde, taylor_constants, y_singular)

params_st = st.builds(
    lambda a, b, g, h: ModelParams(a, b, g, h),
    st.floats(0.05, 10), st.floats(0.1, 8), st.floats(0.05, 10), st.floats(1, 400),
)


def test_sigma_examples():
    np.testing.assert_allclose(sigma(ModelParams(5, 6, 1.5, 5), 1.0), 2 / 3, rtol=1e-14)
    np.testing.assert_allclose(sigma(ModelParams(0.9, 1.5, 0.8, 180), 1.0), 0.2, rtol=1e-14)
    p = ModelParams(2.1, 1.2, 1.9, 30)
    assert abs(sigma(p, p.y_sigma)) < 1e-15


def test_sigma_rejects_non_positive():
    p = ModelParams(1, 1, 1, 30)
    with pytest.raises(DomainError):
        sigma(p, 0.0)
    with pytest.raises(DomainError):
        sigma_tilde(p, -1.0)


def test_params_validation():
    for bad in [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, -0.1, 1), (1, 1, 1, 0), (1, 1, math.nan, 1)]:
        with pytest.raises(DomainError):
            ModelParams(*bad)
    assert ModelParams(1, 1, 0, 1).degenerate


def test_drift_examples():
    p = ModelParams(1, 1, 1, 30)
    assert drift_b(p, 1.0) == 0.0
    assert drift_b(p, 0.0) == 0.0
    np.testing.assert_allclose(drift_b(p, 0.5), 0.25 / 30, rtol=1e-15)


def test_sigma_tilde_examples():
    np.testing.assert_allclose(sigma_tilde(ModelParams(1, 1, 1, 30), 0.25), 0.75, rtol=1e-15)
    np.testing.assert_allclose(sigma_tilde(ModelParams(0.9, 1.5, 0.8, 180), 1.0), 0.2, rtol=1e-14)


@pytest.mark.parametrize("abg", [(0.9, 1.5, 0.8), (2.1, 1.2, 1.9), (5, 6, 1.7), (2, 1, 2)])
def test_y_singular_matches_bisection(abg):
    p = ModelParams(*abg, 30)
    root = bisect_root(lambda y: sigma_tilde(p, y), 1e-6, 50.0)
    np.testing.assert_allclose(y_singular(p), root, rtol=1e-10)
    assert abs(sigma(p, p.y_sigma)) < 1e-14


def test_y_singular_values():
    np.testing.assert_allclose(ModelParams(0.9, 1.5, 0.8, 180).y_sigma, 1.2114, atol=1e-4)
    assert ModelParams(3, 1.5, 2, 1).y_sigma == 1.0
    assert ModelParams(1, 1, 0, 1).y_sigma == 0.0


@settings(max_examples=50, deadline=None)
@given(params_st, st.floats(0.01, 20))
def test_sigma_tilde_identity(p, y):
    assert sigma_tilde(p, y) == y * sigma(p, y)


@settings(max_examples=50, deadline=None)
@given(params_st)
def test_sigma_decreasing_and_sign(p):
    ys = np.geomspace(1e-3, 1e3, 400)
    s = sigma(p, ys)
    # strict where gamma y^-beta is resolvable against alpha/beta
    assert np.all(np.diff(s) <= 0)
    assert np.all(np.diff(s[ys <= 10]) < 0)
    away = np.abs(ys - p.y_sigma) > 1e-9 * p.y_sigma
    assert np.all(np.sign(s[away]) == np.sign(p.y_sigma - ys[away]))


def test_sigma_derivatives_against_differences():
    p = ModelParams(2.1, 1.2, 1.9, 30)
    y, e = 0.8, 1e-5
    s0, s1, s2 = sigma_derivatives(p, y)
    np.testing.assert_allclose(s1, (sigma(p, y + e) - sigma(p, y - e)) / (2 * e), rtol=1e-8)
    np.testing.assert_allclose(s2, (sigma(p, y + e) - 2 * s0 + sigma(p, y - e)) / e ** 2, rtol=1e-4)


def test_taylor_constants_trivial():
    for b in (1.0, 2.0):
        tc = taylor_constants(b)
        assert (tc.a_beta, tc.b_beta, tc.c_beta) == (0.0, 0.0, 0.0)
    tc = taylor_constants(3.0)
    assert tc.a_beta == 1.0 and tc.b_beta == 1.0
    np.testing.assert_allclose(tc.c_beta, 1.0 * (0 + 0 - 1.0), atol=1e-15)


@pytest.mark.parametrize("beta", [0.7, 1.5, 3.0, 6.0])
def test_expansion_coefficients_match_oracles(beta):
    fd = richardson_taylor(expanded_function(beta))
    sym = sympy_taylor(beta)
    np.testing.assert_allclose(fd, sym, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(expansion_coefficients(beta), sym, rtol=1e-12, atol=1e-14)


def test_stated_constants_depart_from_series():
    # only the (beta-1)(beta-2) roots make the stated constants and the series agree
    for beta in (0.7, 1.5, 3.0, 6.0):
        stated = np.array(taylor_constants(beta).series_coefficients())
        assert not np.allclose(stated, expansion_coefficients(beta), rtol=1e-6)
    np.testing.assert_allclose(taylor_constants(1.0).series_coefficients(), expansion_coefficients(1.0), atol=0)
