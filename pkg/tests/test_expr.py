import numpy as np
import pytest

from robinhp.exprgrammar import (
    BinOp,
    Call,
    ExprError,
    Neg,
    Num,
    Pi,
    Var,
    eval_expr,
    expr_function,
    expr_to_str,
    parse_expr,
)


def ev(text, x1, x2):
    return float(eval_expr(parse_expr(text), x1, x2))


def test_preset_targets():
    assert abs(ev("10*x1*x2*sin(pi*x1)*sin(pi*x2)", 0.5, 0.5) - 2.5) <= 1e-14
    assert abs(ev("x1*sin(pi*x2)+x2*sin(pi*x1)", 1.0, 0.5) - 1.0) <= 1e-12


def test_syntax_error_positions():
    with pytest.raises(ExprError) as err:
        parse_expr("sin(")
    assert err.value.position == 4
    with pytest.raises(ExprError) as err:
        parse_expr("x1 + * x2")
    assert err.value.position == 5
    with pytest.raises(ExprError):
        parse_expr("")


def test_unknown_identifier_and_arity():
    with pytest.raises(ExprError) as err:
        parse_expr("x3 + 1")
    assert "x3" in str(err.value)
    with pytest.raises(ExprError) as err:
        parse_expr("sin(x1, x2)")
    assert "argument" in str(err.value)
    with pytest.raises(ExprError):
        parse_expr("tan(x1)")


def test_precedence_and_unary_minus():
    # unary minus binds tighter than * and /
    assert ev("-2*3", 0, 0) == -6.0
    assert ev("2-3-1", 0, 0) == -2.0           # left associative
    assert ev("12/3/2", 0, 0) == 2.0
    assert ev("1+2*3", 0, 0) == 7.0
    assert ev("-x1*x2", 3.0, 5.0) == -15.0
    assert ev("2--3", 0, 0) == 5.0
    assert abs(ev("cos(pi)", 0, 0) + 1.0) <= 1e-15


def test_vectorized_evaluation():
    f = expr_function("x1*sin(pi*x2)")
    x = np.linspace(0, 1, 7)
    vals = f(x, x)
    assert vals.shape == x.shape
    assert np.abs(vals - x * np.sin(np.pi * x)).max() <= 1e-14


def test_round_trip_fixed_cases():
    cases = [
        "10*x1*x2*sin(pi*x1)*sin(pi*x2)",
        "x1*sin(pi*x2)+x2*sin(pi*x1)",
        "-(x1+x2)*cos(pi/2*x1)",
        "1.5e2*x1-2/(x2+3)",
    ]
    for text in cases:
        ast = parse_expr(text)
        assert parse_expr(expr_to_str(ast)) == ast


def random_ast(rng, depth=0):
    choice = rng.integers(0, 7 if depth < 4 else 3)
    if choice == 0:
        return Num(float(np.round(rng.uniform(0, 10), 3)))
    if choice == 1:
        return Var("x1" if rng.integers(0, 2) else "x2")
    if choice == 2:
        return Pi()
    if choice == 3:
        return Neg(random_ast(rng, depth + 1))
    if choice == 4:
        return Call("sin" if rng.integers(0, 2) else "cos", random_ast(rng, depth + 1))
    op = "+-*/"[rng.integers(0, 4)]
    return BinOp(op, random_ast(rng, depth + 1), random_ast(rng, depth + 1))


def test_round_trip_random_asts():
    rng = np.random.default_rng(123)
    for _ in range(200):
        ast = random_ast(rng)
        assert parse_expr(expr_to_str(ast)) == ast


def test_fuzz_never_crashes():
    rng = np.random.default_rng(99)
    alphabet = list("x12pisincos+-*/(), .e")
    for _ in range(300):
        text = "".join(rng.choice(alphabet)
                       for _ in range(int(rng.integers(1, 25))))
        try:
            node = parse_expr(text)
            val = eval_expr(node, 0.3, 0.7)
            assert np.isscalar(val) or isinstance(val, np.ndarray)
        except ExprError as exc:
            assert isinstance(exc.position, int)
            assert 0 <= exc.position <= len(text)
