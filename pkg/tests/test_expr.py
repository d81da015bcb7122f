import numpy as np
import pytest

from nhg.expr import Expr, ExpressionError, eval_matrix, eval_vector


def test_arithmetic_and_functions():
    e = Expr("2^3 + sin(pi/2) - exp(0)*abs(-2)")
    assert e(0.0) == pytest.approx(7.0)


def test_power_alias():
    assert Expr("t**2")(3.0) == Expr("t^2")(3.0) == 9.0


def test_s_is_time_alias():
    assert Expr("s + 1")(2.0) == 3.0


def test_state_variables_vectorized():
    e = Expr("y_1*y_2 + t", dimension=2)
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(e(np.array([0.0, 1.0]), y), [2.0, 13.0])


def test_plain_y_in_one_dimension():
    assert Expr("2*y", dimension=1)(0.0, np.array([3.0])) == 6.0


@pytest.mark.parametrize("src", [
    "__import__('os')",
    "open('x')",
    "t.real",
    "[1, 2]",
    "lambda x: x",
    "y_3",
    "foo(t)",
    "sin(t, t)",
    "'text'",
])
def test_rejects_unsafe_or_unknown(src):
    with pytest.raises(ExpressionError):
        Expr(src, dimension=2)


def test_rejects_syntax_error():
    with pytest.raises(ExpressionError, match="cannot parse"):
        Expr("1 +")


def test_state_needed():
    with pytest.raises(ExpressionError, match="state"):
        Expr("y_1")(0.0)


def test_vector_and_matrix_shapes():
    f = [Expr("y_1", 2), Expr("1", 2)]
    y = np.zeros((5, 2))
    assert eval_vector(f, np.zeros(5), y).shape == (5, 2)
    M = [[Expr("t"), Expr("0")], [Expr("1"), Expr("-t")]]
    out = eval_matrix(M, np.array([1.0, 2.0]))
    np.testing.assert_array_equal(out[1], [[2.0, 0.0], [1.0, -2.0]])
