import numpy as np
import pytest

from flowlab.expressions import ExpressionError, parse_expression


def test_arithmetic_and_variables():
    e = parse_expression("2*x1 + t - 1", 1)
    out = e(0.5, np.array([[1.0], [2.0]]))
    assert np.allclose(out, [1.5, 3.5])


def test_x_alias_for_first_coordinate():
    e = parse_expression("x*x", 2)
    out = e(0.0, np.array([[3.0, 9.0]]))
    assert out[0] == 9.0


def test_functions():
    e = parse_expression("exp(-pow(x1, 2)) + abs(x1) + sign(x1)", 1)
    out = e(0.0, np.array([[-2.0]]))
    assert np.isclose(out[0], np.exp(-4.0) + 2.0 - 1.0)


def test_indicator_uses_euclidean_norm():
    e = parse_expression("indicator(1.5)", 2)
    out = e(0.0, np.array([[1.0, 1.0], [1.5, 1.5]]))
    assert out.tolist() == [1.0, 0.0]


def test_indicator_radius_must_be_constant():
    with pytest.raises(ExpressionError):
        parse_expression("indicator(x1)", 1)


def test_unary_minus_and_division():
    e = parse_expression("-x1 / (1 + x1)", 1)
    assert np.isclose(e(0.0, np.array([[1.0]]))[0], -0.5)


def test_out_of_range_variable():
    with pytest.raises(ExpressionError):
        parse_expression("x3", 2)


def test_syntax_errors():
    for bad in ("1 +", "foo(2)", "pow(1)", "(1 + 2", "1 $ 2"):
        with pytest.raises(ExpressionError):
            parse_expression(bad, 1)


def test_log():
    e = parse_expression("log(1 + x1*x1)", 1)
    assert np.isclose(e(0.0, np.array([[2.0]]))[0], np.log(5.0))
