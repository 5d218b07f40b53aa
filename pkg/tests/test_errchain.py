import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funnelsim import (
    ErrorChainParams,
    FunnelFunction,
    check_feasibility,
    derivative_bounds,
    left_shift,
    xi_all,
    xi_binomial,
    xi_matrix,
    xi_recursive,
)

FUNNEL = FunnelFunction.exponential(3, 1, 0.1)


def test_left_shift_examples():
    np.testing.assert_array_equal(left_shift(np.array([[1.0], [2.0], [3.0]])), [[2.0], [3.0], [0.0]])
    np.testing.assert_array_equal(left_shift(np.zeros((4, 2))), np.zeros((4, 2)))
    np.testing.assert_array_equal(
        left_shift(np.array([[1.0, 0.0], [0.0, 1.0]])), [[0.0, 1.0], [0.0, 0.0]]
    )


def test_xi_recursion_unit_vector():
    p = ErrorChainParams(k=3, r=3, m=1)
    assert xi_recursive(p, 1, [1, 0, 0])[0] == 1.0
    assert xi_recursive(p, 2, [1, 0, 0])[0] == 3.0
    assert xi_recursive(p, 3, [1, 0, 0])[0] == 9.0


def test_xi_recursion_benchmark_stack():
    # hand expansion: xi2 = 0.79 + 3*(-0.3) = -0.11, xi3 = -2 + 6*0.79 + 9*(-0.3) = 0.04
    p = ErrorChainParams(k=3, r=3, m=1)
    z = [-0.3, 0.79, -2.0]
    assert xi_recursive(p, 2, z)[0] == pytest.approx(-0.11, abs=1e-12)
    assert xi_recursive(p, 3, z)[0] == pytest.approx(0.04, abs=1e-12)


def test_xi_zero_stack():
    p = ErrorChainParams(k=7.3, r=5, m=2)
    np.testing.assert_array_equal(xi_all(p, np.zeros((5, 2))), np.zeros((5, 2)))


def test_xi_binomial_examples():
    p = ErrorChainParams(k=3, r=3, m=1)
    assert xi_binomial(p, 3, [1, 0, 0])[0] == 9.0
    assert xi_binomial(p, 3, [0, 1, 0])[0] == 6.0
    z = np.array([[0.37], [-1.2], [0.5]])
    np.testing.assert_allclose(xi_binomial(p, 1, z), z[0])


def test_stage_out_of_range():
    p = ErrorChainParams(k=1, r=3, m=1)
    with pytest.raises(ValueError):
        xi_recursive(p, 0, [1, 2, 3])
    with pytest.raises(ValueError):
        xi_binomial(p, 4, [1, 2, 3])


def test_xi_matrix_hand_example():
    p = ErrorChainParams(k=3, r=3, m=1)
    np.testing.assert_array_equal(xi_matrix(p), [[1, 0, 0], [3, 1, 0], [9, 6, 1]])


def test_xi_matrix_r1_identity():
    p = ErrorChainParams(k=11.0, r=1, m=3)
    np.testing.assert_array_equal(xi_matrix(p), np.eye(3))


def test_xi_matrix_determinant_one():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = ErrorChainParams(k=float(rng.uniform(0, 10)), r=int(rng.integers(1, 7)), m=int(rng.integers(1, 4)))
        assert np.linalg.det(xi_matrix(p)) == pytest.approx(1.0, abs=1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        ErrorChainParams(k=-0.1, r=3, m=1)
    with pytest.raises(ValueError):
        ErrorChainParams(k=1.0, r=0, m=1)
    with pytest.raises(ValueError):
        ErrorChainParams(k=1.0, r=3, m=0)
    with pytest.raises(ValueError):
        ErrorChainParams(k=1.0, r=21, m=1)
    assert ErrorChainParams(k=3.0, r=3, m=1).meets_gain_bound(1.0)
    assert not ErrorChainParams(k=2.0, r=3, m=1).meets_gain_bound(1.0)


# property suites --------------------------------------------------------

stack_params = st.tuples(
    st.floats(0.0, 10.0), st.integers(1, 6), st.integers(1, 3)
)


@settings(max_examples=200)
@given(params=stack_params, data=st.data())
def test_recursive_matches_binomial(params, data):
    k, r, m = params
    p = ErrorChainParams(k=k, r=r, m=m)
    z = np.array(
        data.draw(st.lists(st.floats(-1, 1), min_size=r * m, max_size=r * m))
    ).reshape(r, m)
    for i in range(1, r + 1):
        a = xi_recursive(p, i, z)
        b = xi_binomial(p, i, z)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=100)
@given(params=stack_params, data=st.data())
def test_matrix_matches_stacked_recursion(params, data):
    k, r, m = params
    p = ErrorChainParams(k=k, r=r, m=m)
    z = np.array(
        data.draw(st.lists(st.floats(-1, 1), min_size=r * m, max_size=r * m))
    ).reshape(r, m)
    stacked = xi_matrix(p) @ z.reshape(r * m)
    np.testing.assert_allclose(stacked.reshape(r, m), xi_all(p, z), rtol=1e-12, atol=1e-12)


@settings(max_examples=100)
@given(params=stack_params, data=st.data(), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_xi_linear_in_stack(params, data, a, b):
    k, r, m = params
    p = ErrorChainParams(k=k, r=r, m=m)
    draw_stack = st.lists(st.floats(-1, 1), min_size=r * m, max_size=r * m)
    z = np.array(data.draw(draw_stack)).reshape(r, m)
    w = np.array(data.draw(draw_stack)).reshape(r, m)
    lhs = xi_all(p, a * z + b * w)
    rhs = a * xi_all(p, z) + b * xi_all(p, w)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


# feasibility ------------------------------------------------------------

def test_feasibility_paper_initial_stack():
    p = ErrorChainParams(k=3, r=3, m=1)
    report = check_feasibility(0.0, [-0.3, 0.79, -2.0], FUNNEL, p)
    np.testing.assert_allclose(report.stage_norms, (0.3, 0.11, 0.04), atol=1e-12)
    np.testing.assert_allclose(report.stage_bounds, (3.1, 0.1, 0.1), atol=1e-12)
    assert not report.feasible
    assert report.margins[1] == pytest.approx(-0.01, abs=1e-12)


def test_feasibility_zero_stack():
    p = ErrorChainParams(k=3, r=3, m=1)
    report = check_feasibility(0.0, np.zeros((3, 1)), FUNNEL, p)
    assert report.feasible
    np.testing.assert_allclose(report.margins, report.stage_bounds)


def test_feasibility_boundary_is_infeasible():
    p = ErrorChainParams(k=0.0, r=2, m=1)
    psi0 = FUNNEL.value(0.0)
    report = check_feasibility(0.0, [psi0, 0.0], FUNNEL, p)
    assert not report.feasible


@settings(max_examples=50)
@given(params=stack_params, t=st.floats(0, 10))
def test_zero_stack_always_feasible(params, t):
    k, r, m = params
    p = ErrorChainParams(k=k, r=r, m=m)
    assert check_feasibility(t, np.zeros((r, m)), FUNNEL, p).feasible


# derivative bounds ------------------------------------------------------

def test_derivative_bounds_hand_recursion():
    p = ErrorChainParams(k=3, r=3, m=1)
    bounds = derivative_bounds(p, FUNNEL, ref_rth_bound=1.0)
    assert bounds.bound(1, 0) == pytest.approx(3.1, abs=1e-12)
    assert bounds.bound(2, 0) == pytest.approx(0.1, abs=1e-12)
    assert bounds.bound(1, 1) == pytest.approx(9.4, abs=1e-12)
    assert bounds.bound(2, 1) == pytest.approx(0.4, abs=1e-12)
    assert bounds.bound(1, 2) == pytest.approx(28.6, abs=1e-12)
    assert bounds.drift_bound == pytest.approx(88.0, abs=1e-12)


def test_derivative_bounds_order_one():
    p = ErrorChainParams(k=3, r=1, m=1)
    bounds = derivative_bounds(p, FUNNEL, ref_rth_bound=1.0)
    assert bounds.table == ((3.1,),)
    assert bounds.drift_bound == 1.0


def test_derivative_bounds_zero_rate():
    p = ErrorChainParams(k=0, r=3, m=1)
    bounds = derivative_bounds(p, FUNNEL, ref_rth_bound=0.5)
    # with k = 0 every new entry copies the row below
    assert bounds.bound(1, 1) == bounds.bound(2, 0)
    assert bounds.bound(1, 2) == bounds.bound(3, 0)
    assert bounds.drift_bound == 0.5


@settings(max_examples=50)
@given(
    k=st.floats(0, 10),
    r=st.integers(1, 6),
    ref_bound=st.floats(0, 5),
)
def test_derivative_bounds_recursion_identity(k, r, ref_bound):
    p = ErrorChainParams(k=k, r=r, m=1)
    bounds = derivative_bounds(p, FUNNEL, ref_bound)
    for i in range(1, r + 1):
        for j in range(r - i):
            assert bounds.bound(i, j + 1) == bounds.bound(i + 1, j) + k * bounds.bound(i, j)
