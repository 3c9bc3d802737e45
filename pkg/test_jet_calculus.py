"""Tests for truncated multivariate Taylor jets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from data.synthetic.spray_generator import random_spray
from tools.errors import DomainError, OrderError
from tools.expression_parser_tool import evaluate_at, parse
from tools.jet_calculus import (
    MAX_ORDER,
    Jet,
    derivative_tensors,
    extract_partial,
    lift_point,
    multi_index_table,
)


def _jet(text: str, x, y, order: int) -> Jet:
    n = np.shape(x)[-1]
    seeds = lift_point(x, y, order)
    return evaluate_at(parse(text, n), seeds[:n], seeds[n:])


# ============================================================================
# Seeds and extraction
# ============================================================================

def test_seed_jet():
    x1, y1 = lift_point([0.0], [2.0], 1)
    assert y1.value == 2.0
    assert extract_partial(y1, (0, 1)) == 1.0
    assert extract_partial(y1, (1, 0)) == 0.0
    assert x1.value == 0.0


def test_square_partials():
    _, y1 = lift_point([0.0], [3.0], 2)
    square = y1 * y1
    assert extract_partial(square, (0, 1)) == 6.0
    assert extract_partial(square, (0, 2)) == 2.0
    assert extract_partial(square, (0, 0)) == 9.0


def test_cube_third_partial():
    _, y1 = lift_point([0.0], [1.7], 3)
    assert extract_partial(y1 ** 3, (0, 3)) == pytest.approx(6.0, rel=1e-14)


def test_partial_beyond_order_raises():
    _, y1 = lift_point([0.0], [1.0], 2)
    with pytest.raises(OrderError):
        extract_partial(y1 * y1, (0, 3))


@pytest.mark.parametrize("m, order", [(2, 0), (2, 3), (4, 3), (6, 2), (12, 3)])
def test_coefficient_count(m, order):
    assert multi_index_table(m, order).size == math.comb(m + order, order)


def test_order_above_maximum_raises():
    with pytest.raises(OrderError):
        multi_index_table(2, MAX_ORDER + 1)


def test_polynomial_oracle():
    f = _jet("2 + 3*x1 - y1^2 + 0.5*x1^2*y1 + 4*y1^3", [0.7], [-1.2], 3)
    expected = {
        (0, 0): -4.546,
        (1, 0): 2.16,
        (0, 1): 19.925,
        (2, 0): -1.2,
        (1, 1): 0.7,
        (0, 2): -30.8,
        (3, 0): 0.0,
        (2, 1): 1.0,
        (1, 2): 0.0,
        (0, 3): 24.0,
    }
    for beta, value in expected.items():
        assert extract_partial(f, beta) == pytest.approx(value, rel=1e-12, abs=1e-12), beta


# ============================================================================
# Arithmetic closure
# ============================================================================

def test_product_rule_cross_term():
    a, b = lift_point([0.0], [0.0], 2)
    product = (1 + a) * (1 + b)
    assert extract_partial(product, (1, 1)) == 1.0
    assert extract_partial(product, (2, 0)) == 0.0


def test_exp_of_ln_is_identity():
    seeds = lift_point([0.4], [1.3], 3)
    composed = seeds[1].ln().exp()
    np.testing.assert_allclose(composed.coefficients, seeds[1].coefficients, rtol=1e-13, atol=1e-13)


def test_ln_of_product():
    x, y = [0.2, -0.1], [1.5, 0.8]
    left = _jet("ln(y1*y2)", x, y, 3)
    right = _jet("ln(y1) + ln(y2)", x, y, 3)
    np.testing.assert_allclose(left.coefficients, right.coefficients, rtol=1e-13, atol=1e-13)


def test_pythagorean_identity():
    one = _jet("sin(x1*y2)^2 + cos(x1*y2)^2", [0.3, 1.1], [-0.7, 2.2], 3)
    assert one.value == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(one.coefficients[1:], 0.0, atol=1e-13)


def test_division_inverts_multiplication():
    x, y = [0.5], [2.0]
    quotient = _jet("(x1 + y1^3)/(1 + x1*y1)", x, y, 3)
    product = quotient * _jet("1 + x1*y1", x, y, 3)
    np.testing.assert_allclose(product.coefficients, _jet("x1 + y1^3", x, y, 3).coefficients, atol=1e-13)


def test_mixed_orders_truncate_to_minimum():
    high = lift_point([1.0], [2.0], 3)[1]
    low = lift_point([1.0], [2.0], 1)[1]
    total = high * high + low
    assert total.order == 1
    assert extract_partial(total, (0, 1)) == pytest.approx(5.0)


def test_derivative_lowers_order():
    f = _jet("x1*y1^3", [2.0], [1.5], 3)
    df = f.derivative(1)
    assert df.order == 2
    assert df.value == pytest.approx(3 * 2.0 * 1.5 ** 2)
    assert extract_partial(df, (1, 1)) == pytest.approx(6 * 1.5)


def test_abs_freezes_sign():
    f = _jet("abs(x1 - y1)", [0.0], [2.0], 2)
    assert f.value == 2.0
    assert extract_partial(f, (0, 1)) == 1.0
    assert extract_partial(f, (1, 0)) == -1.0


@pytest.mark.parametrize("text", ["abs(y1)", "sqrt(y1)", "1/y1", "ln(y1)", "y1^(-1)"])
def test_singular_jets_raise(text):
    with pytest.raises(DomainError):
        _jet(text, [0.0], [0.0], 2)


def test_batched_jets_match_pointwise(rng):
    x = rng.uniform(-1, 1, size=(5, 2))
    y = rng.uniform(0.5, 2, size=(5, 2))
    text = "exp(x1*y2)/sqrt(yy) + y1^2*x2"
    batched = _jet(text, x, y, 3)
    assert batched.batch_shape == (5,)
    for k in range(5):
        single = _jet(text, x[k], y[k], 3)
        np.testing.assert_allclose(batched.coefficients[:, k], single.coefficients, rtol=1e-14, atol=1e-14)


# ============================================================================
# Agreement with finite differences
# ============================================================================

def test_central_differences_observed_order():
    text = "sin(5*x1)*y1^2 + exp(0.5*x2*y2)"
    x0, y0 = np.array([0.1, 0.3]), np.array([1.3, -0.4])
    exact = extract_partial(_jet(text, x0, y0, 1), (1, 0, 0, 0))
    expression = parse(text, 2)
    errors = []
    for h in (1e-4, 1e-5):
        step = np.array([h, 0.0])
        fd = (evaluate_at(expression, x0 + step, y0) - evaluate_at(expression, x0 - step, y0)) / (2 * h)
        errors.append(abs(fd - exact))
    observed = math.log10(errors[0] / errors[1])
    assert observed >= 1.9


@settings(max_examples=30, deadline=None)
@given(
    st.floats(min_value=-1, max_value=1),
    st.floats(min_value=0.5, max_value=2),
)
def test_gradient_matches_derivative_of_closed_form(x, y):
    # d/dy [x * y * ln(y)] = x (ln(y) + 1)
    f = _jet("x1*y1*ln(y1)", [x], [y], 1)
    assert extract_partial(f, (0, 1)) == pytest.approx(x * (math.log(y) + 1), rel=1e-12, abs=1e-14)


# ============================================================================
# Derivative tensors
# ============================================================================

def test_derivative_tensors_are_symmetric():
    jets = [_jet("x1*y1*y2 + sin(x2)*y1^2", [0.2, 0.4], [1.0, -1.5], 3)]
    _, D1, D2, D3 = derivative_tensors(jets, 3)
    assert D1.shape == (1, 4)
    np.testing.assert_allclose(D2, np.swapaxes(D2, -1, -2), atol=1e-14)
    np.testing.assert_allclose(D3, np.swapaxes(D3, -1, -3), atol=1e-14)


def test_derivative_tensors_reject_excess_order():
    with pytest.raises(OrderError):
        derivative_tensors([_jet("y1", [0.0], [1.0], 2)], 3)


@pytest.mark.parametrize("seed", range(20))
def test_single_pass_matches_nested_evaluation(seed):
    spray = random_spray(2, seed=seed)
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-1, 1, size=2), rng.uniform(-2, 2, size=2)
    jets = spray.coefficient_jets(x, y, 3)
    third = derivative_tensors(jets, 3)[3]
    for slot in range(4):
        nested = derivative_tensors([g.derivative(slot) for g in jets], 2)[2]
        np.testing.assert_allclose(third[..., slot], nested, rtol=1e-10, atol=1e-10)
