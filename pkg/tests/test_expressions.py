import math

import numpy as np
import pytest

from finslerlab import diffcore as dc
from finslerlab.errors import DomainEvalError, ExpressionError
from finslerlab.expressions import compile_expression


def ev(text, n, x, y=None):
    return compile_expression(text, n)(x, y)


def test_arithmetic_and_precedence():
    assert ev("2 + 3*4", 1, [0.0]) == 14.0
    assert ev("(2 + 3)*4", 1, [0.0]) == 20.0
    assert ev("2^3^2", 1, [0.0]) == 512.0          # right associative
    assert ev("-x1^2", 1, [3.0]) == -9.0           # unary minus binds last
    assert ev("6/4", 1, [0.0]) == 1.5


def test_unicode_operators():
    assert ev("6 ÷ 2 × 3", 1, [0.0]) == 9.0
    assert ev("5 − 2", 1, [0.0]) == 3.0
    assert ev("2**3", 1, [0.0]) == 8.0


def test_variables_and_functions():
    val = ev("sqrt(x1^2 + y1^2) + sin(x2)*cos(y2)", 2, [3.0, 0.5], [4.0, 1.0])
    assert val == pytest.approx(5.0 + math.sin(0.5) * math.cos(1.0))


def test_unknown_variable_rejected():
    with pytest.raises(ExpressionError, match="x9"):
        compile_expression("x1 + x9", 2)
    with pytest.raises(ExpressionError, match="y1"):
        compile_expression("y1", 2, allow_y=False)


def test_syntax_errors_carry_position():
    with pytest.raises(ExpressionError):
        compile_expression("2 +", 1)
    with pytest.raises(ExpressionError):
        compile_expression("sqrt 4", 1)
    with pytest.raises(ExpressionError, match="unknown function"):
        compile_expression("tan(x1)", 1)


def test_domain_error_names_subexpression():
    expr = compile_expression("1 + sqrt(x1 - 2)", 1)
    with pytest.raises(DomainEvalError) as err:
        expr([1.0], None)
    assert "sqrt(x1 - 2)" in str(err.value)


def test_division_by_zero_names_subexpression():
    expr = compile_expression("y1/(x1 - 1)", 1)
    with pytest.raises(DomainEvalError) as err:
        expr([1.0], [2.0])
    assert "x1 - 1" in str(err.value)


def test_batched_array_evaluation():
    expr = compile_expression("x1*y1 + sin(x2)", 2)
    xs = [np.array([1.0, 2.0]), np.array([0.0, np.pi / 2])]
    ys = [np.array([3.0, 4.0]), np.array([0.0, 0.0])]
    out = expr(xs, ys)
    assert out == pytest.approx([3.0, 9.0])


def test_multidual_evaluation_differentiates():
    expr = compile_expression("x1^2*y1 + exp(y2)", 2)
    space = dc.taylor_space(4, 2)
    xs, ys = space.lift_point([2.0, 0.0], [3.0, 0.5])
    jet = expr(xs, ys)
    assert jet.partial((0, 2)) == pytest.approx(2 * 2.0)      # d2/dx1 dy1
    assert jet.partial((3, 3)) == pytest.approx(math.exp(0.5))


def test_integer_powers_stay_exact_on_jets():
    expr = compile_expression("y1^4", 1)
    space = dc.taylor_space(2, 4)
    _, ys = space.lift_point([0.0], [1.5])
    jet = expr([space.constant(0.0)], ys)
    assert jet.partial((1, 1, 1, 1)) == pytest.approx(24.0)
