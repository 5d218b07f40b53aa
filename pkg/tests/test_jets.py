import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funnelsim import Jet, jet_lift, squared_norm_jet


def poly_derivatives(coeffs, t, order):
    """Raw derivatives of a polynomial (ascending coefficients) at t."""
    return [
        sum(c * math.perm(p, j) * t ** (p - j) for p, c in enumerate(coeffs) if p >= j)
        for j in range(order + 1)
    ]


def poly_mul(a, b):
    out = [0.0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def test_seed_from_stack():
    jets = jet_lift(np.array([[1.0], [2.0], [3.0]]), order=2)
    assert len(jets) == 1
    assert jets[0].coef == (1.0, 2.0, 3.0)


def test_seed_order_too_large():
    with pytest.raises(ValueError):
        jet_lift(np.array([[1.0], [2.0]]), order=2)


def test_product_with_constant_factor():
    a = Jet((1.0, 1.0, 0.0))
    b = Jet((1.0, 0.0, 0.0))
    assert (a * b).coef == (1.0, 1.0, 0.0)


def test_reciprocal_hand_example():
    # 1/(1-x) with x=0.01, xdot=0.2: value 1/0.99, derivative 0.2/0.99^2
    x = Jet((0.01, 0.2))
    g = (1.0 - x).reciprocal()
    assert g.value == pytest.approx(1.0101010101010102, rel=1e-12)
    assert g.coef[1] == pytest.approx(0.2 / 0.99**2, rel=1e-12)
    assert g.coef[1] == pytest.approx(0.204061, abs=1e-6)


def test_second_derivative_of_reciprocal():
    # d^2/dt^2 1/(1-x) = xddot/(1-x)^2 + 2 xdot^2/(1-x)^3
    x = Jet((0.3, 0.5, -0.2))
    g = (1.0 - x).reciprocal()
    expected = -0.2 / 0.7**2 + 2 * 0.5**2 / 0.7**3
    assert g.coef[2] == pytest.approx(expected, rel=1e-12)


def test_differentiate_is_left_shift():
    j = Jet((1.0, 2.0, 3.0))
    assert j.differentiate().coef == (2.0, 3.0)
    with pytest.raises(ValueError):
        Jet((1.0,)).differentiate()


def test_truncation_to_shorter_operand():
    a = Jet((1.0, 2.0, 3.0))
    b = Jet((4.0, 5.0))
    assert (a + b).order == 1
    assert (a * b).order == 1


coeff_lists = st.lists(st.floats(-2, 2), min_size=1, max_size=5)


@settings(max_examples=200)
@given(pa=coeff_lists, pb=coeff_lists, t=st.floats(-1.5, 1.5))
def test_product_matches_polynomial_oracle(pa, pb, t):
    order = 4
    ja = Jet(tuple(poly_derivatives(pa, t, order)))
    jb = Jet(tuple(poly_derivatives(pb, t, order)))
    expected = poly_derivatives(poly_mul(pa, pb), t, order)
    got = ja * jb
    np.testing.assert_allclose(got.coef, expected, rtol=1e-10, atol=1e-10)


@settings(max_examples=200)
@given(pa=coeff_lists, pb=coeff_lists, t=st.floats(-1.5, 1.5))
def test_division_inverts_product(pa, pb, t):
    order = 4
    ja = Jet(tuple(poly_derivatives(pa, t, order)))
    jb = Jet(tuple(poly_derivatives(pb, t, order)))
    if abs(jb.value) < 1e-2:
        return
    back = (ja / jb) * jb
    # reciprocal conditioning grows like (|b|_inf / |b_0|)^order
    amp = (1.0 + max(abs(c) for c in jb.coef) / abs(jb.value)) ** order
    tol = 1e-12 * amp * max(1.0, max(abs(c) for c in ja.coef))
    np.testing.assert_allclose(back.coef, ja.coef, rtol=0, atol=tol)


@settings(max_examples=100)
@given(pa=coeff_lists, t=st.floats(-1.5, 1.5))
def test_differentiate_matches_polynomial_oracle(pa, t):
    order = 4
    j = Jet(tuple(poly_derivatives(pa, t, order)))
    dcoeffs = [p * c for p, c in enumerate(pa)][1:] or [0.0]
    expected = poly_derivatives(dcoeffs, t, order - 1)
    np.testing.assert_allclose(j.differentiate().coef, expected, rtol=1e-10, atol=1e-10)


def test_squared_norm_jet_two_components():
    stack = np.array([[1.0, 2.0], [0.5, -1.0]])
    jets = jet_lift(stack, order=1)
    sq = squared_norm_jet(jets)
    assert sq.value == pytest.approx(5.0)
    # d/dt (x^2 + y^2) = 2 x xdot + 2 y ydot = 2*1*0.5 + 2*2*(-1)
    assert sq.coef[1] == pytest.approx(-3.0)


def test_reciprocal_of_zero_value_fails():
    with pytest.raises(ZeroDivisionError):
        Jet((0.0, 1.0)).reciprocal()
