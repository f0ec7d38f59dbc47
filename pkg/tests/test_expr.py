import math

import mpmath
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from impgap import expr as E

VARS = ["t", "x1", "x2", "x3"]


def mp_eval(e, env):
    """Independent high-precision evaluator over the node types."""
    if isinstance(e, E.Const):
        return mpmath.mpf(e.value)
    if isinstance(e, E.Var):
        return env[e.name]
    if isinstance(e, E.Neg):
        return -mp_eval(e.arg, env)
    if isinstance(e, E.BinOp):
        a, b = mp_eval(e.left, env), mp_eval(e.right, env)
        return {"+": a + b, "-": a - b, "*": a * b}[e.op] if e.op != "/" else a / b
    if isinstance(e, E.Pow):
        return mp_eval(e.base, env) ** e.exponent
    if isinstance(e, E.Func):
        a = mp_eval(e.arg, env)
        return {"sin": mpmath.sin, "cos": mpmath.cos, "exp": mpmath.exp, "log": mpmath.log,
                "abs": abs, "sign": mpmath.sign}[e.name](a)
    raise TypeError(e)


def exprs(max_leaves=12):
    leaf = st.one_of(st.sampled_from(["x1", "x2", "t"]),
                     st.floats(0.1, 3.0).map(lambda v: f"{v:.3f}"))

    def extend(inner):
        return st.one_of(
            st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(
                lambda a: f"({a[0]} {a[1]} {a[2]})"),
            st.tuples(inner, inner).map(lambda a: f"({a[0]}) / (2 + sin({a[1]}))"),
            st.tuples(inner, st.integers(0, 3)).map(lambda a: f"({a[0]})^{a[1]}"),
            st.tuples(st.sampled_from(["sin", "cos"]), inner).map(lambda a: f"{a[0]}({a[1]})"),
            inner.map(lambda a: f"exp(sin({a}))"),
            inner.map(lambda a: f"log(2 + cos({a}))"),
            inner.map(lambda a: f"-{a}"),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)


def depth(e):
    kids = [getattr(e, k) for k in ("arg", "left", "right", "base") if hasattr(e, k)]
    return 1 + max((depth(k) for k in kids), default=0)


def test_parse_variable_and_negation():
    assert E.parse("x2", VARS) == E.Var("x2")
    assert E.parse("-x1", VARS) == E.Neg(E.Var("x1"))
    assert E.parse("((1))", VARS) == E.Const(1.0)


def test_precedence_and_associativity():
    env = {"x1": 2.0, "x2": 3.0}
    assert E.evaluate(E.parse("-x1^2", VARS), env) == -4.0
    assert E.evaluate(E.parse("x2 - x1 - 1", VARS), env) == 0.0
    assert E.evaluate(E.parse("x2 / x1 / 2", VARS), env) == 0.75
    assert E.evaluate(E.parse("1 + 2 * x2", VARS), env) == 7.0
    assert E.evaluate(E.parse("(1 + 2) * x2", VARS), env) == 9.0
    assert E.evaluate(E.parse("2^3^2", VARS), env) == 64.0


def test_evaluate_examples():
    assert E.evaluate(E.parse("x2", VARS), {"x2": 0.5}) == 0.5
    assert E.evaluate(E.parse("-x1", VARS), {"x1": 1.0}) == -1.0
    assert E.evaluate(E.parse("x1*x2 + 2", VARS), {"x1": 3.0, "x2": 4.0}) == 14.0
    assert E.evaluate(E.parse("1.5e-1 * 2", VARS), {}) == pytest.approx(0.3)


@pytest.mark.parametrize("source, pos", [("x1 +", 4), ("(x1", 3), ("x1 x2", 3), ("x1 ^ 1.5", 5),
                                         ("", 0), ("3 $ 4", 2)])
def test_syntax_errors_carry_position(source, pos):
    with pytest.raises(E.ParseError) as info:
        E.parse(source, VARS)
    assert info.value.position == pos


def test_undeclared_variable():
    with pytest.raises(E.UndeclaredVariableError) as info:
        E.parse("x1 + y", VARS)
    assert info.value.name == "y"


@pytest.mark.parametrize("source, env", [("1 / x1", {"x1": 0.0}), ("log(x1)", {"x1": -1.0}),
                                         ("log(x1)", {"x1": 0.0}), ("x1^-1", {"x1": 0.0})])
def test_domain_errors_carry_node(source, env):
    e = E.parse(source, VARS)
    with pytest.raises(E.DomainError) as info:
        E.evaluate(e, env)
    assert info.value.node is not None


def test_differentiate_examples():
    assert E.evaluate(E.differentiate(E.parse("x2", VARS), "x2"), {}) == 1.0
    assert E.evaluate(E.differentiate(E.parse("-x1", VARS), "x1"), {}) == -1.0
    e = E.parse("sin(x1)*x1", VARS)
    d = E.evaluate(E.differentiate(e, "x1"), {"x1": 0.7})
    h = 1e-5
    fd = (E.evaluate(e, {"x1": 0.7 + h}) - E.evaluate(e, {"x1": 0.7 - h})) / (2 * h)
    assert abs(d - fd) <= 1e-8


def test_abs_derivative_is_sign_and_undefined_at_zero():
    d = E.differentiate(E.parse("abs(x1)", VARS), "x1")
    assert E.evaluate(d, {"x1": -2.0}) == -1.0
    assert E.evaluate(d, {"x1": 3.0}) == 1.0
    with pytest.raises(E.DomainError):
        E.evaluate(d, {"x1": 0.0})


def test_variables_and_is_zero():
    e = E.parse("x1 * t + 0 * x2", VARS)
    assert E.variables(e) <= {"x1", "t", "x2"}
    assert E.is_zero(E.parse("0", VARS))
    assert not E.is_zero(E.parse("x1", VARS))


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(src=exprs(), point=st.tuples(*[st.floats(-1.0, 1.0)] * 3),
       var=st.sampled_from(["x1", "x2", "t"]))
def test_derivative_matches_high_precision_difference(src, point, var):
    e = E.parse(src, VARS)
    assume(depth(e) <= 8)
    env = dict(zip(["x1", "x2", "t"], point))
    d = E.evaluate(E.differentiate(e, var), env)
    mpmath.mp.dps = 40
    menv = {k: mpmath.mpf(v) for k, v in env.items()}

    def f(x):
        local = dict(menv)
        local[var] = x
        return mp_eval(e, local)

    ref = float(mpmath.diff(f, menv[var]))
    val = float(f(menv[var]))
    assert abs(d - ref) <= 1e-6 * (1.0 + abs(val))
    assert math.isclose(E.evaluate(e, env), val, rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=100, deadline=None)
@given(src=exprs(), points=st.lists(st.tuples(*[st.floats(-2.0, 2.0)] * 3), min_size=20,
                                    max_size=20))
def test_print_parse_round_trip(src, points):
    e = E.parse(src, VARS)
    back = E.parse(E.to_string(e), VARS)
    for pt in points:
        env = dict(zip(["x1", "x2", "t"], pt))
        a, b = E.evaluate(e, env), E.evaluate(back, env)
        assert a == b or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-300)
