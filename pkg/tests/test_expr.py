import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termshape.expr import (
    DomainError,
    ExpressionError,
    ParseError,
    UnboundParameterError,
    derivative_fd,
    evaluate,
    parse,
)


def test_parameters_collected():
    assert parse("k*(theta - x)").parameters == {"k", "theta"}
    assert parse("x*(eta - a*ln(x))").parameters == {"eta", "a"}
    assert parse("exp(-t) + min(x, c)").parameters == {"c"}


def test_unbalanced_parenthesis_offset():
    with pytest.raises(ParseError) as info:
        parse("2*(1+")
    assert info.value.offset == 5


@pytest.mark.parametrize("source", ["foo(x)", "min(x)", "exp(x, 1)", "1 +* 2", "x)", "3 $ 4"])
def test_malformed_sources(source):
    with pytest.raises(ParseError):
        parse(source)


def test_evaluation_examples():
    assert evaluate(parse("k*(theta-x)"), 0.05, 0.0, {"k": 2, "theta": 0.1}) == pytest.approx(0.1, abs=1e-15)
    assert evaluate(parse("x^2"), -3.0) == 9.0


def test_precedence():
    assert evaluate(parse("2^3^2"), 0.0) == 512.0
    assert evaluate(parse("-2^2"), 0.0) == -4.0
    assert evaluate(parse("1 - 2 - 3"), 0.0) == -4.0
    assert evaluate(parse("8 / 4 / 2"), 0.0) == 1.0
    assert evaluate(parse("2 + 3 * 4"), 0.0) == 14.0


def test_domain_errors():
    with pytest.raises(DomainError):
        evaluate(parse("ln(x)"), 0.0)
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x)"), -1.0)
    with pytest.raises(DomainError):
        evaluate(parse("x^0.5"), -2.0)
    with pytest.raises(DomainError):
        evaluate(parse("1/x"), 0.0)


def test_unbound_parameter():
    with pytest.raises(UnboundParameterError):
        evaluate(parse("k*x"), 1.0)
    assert issubclass(UnboundParameterError, ExpressionError)


def test_array_and_time_table_evaluation():
    e = parse("theta*x + t")
    x = np.linspace(0, 1, 5)
    out = evaluate(e, x, 2.0, {"theta": lambda t: 3.0 * t})
    np.testing.assert_allclose(out, 6.0 * x + 2.0)


def test_derivative_examples():
    assert derivative_fd(parse("x^2"), 1.0, order=2, step=1e-4) == pytest.approx(2.0, abs=1e-6)
    e = parse("k*(theta-x)")
    assert derivative_fd(e, 0.3, params={"k": 2, "theta": 0.1}, order=2, step=1e-4) == pytest.approx(0.0, abs=1e-8)
    # beta_xx = -a/x for x(1 - a ln x), a = 0.5
    assert derivative_fd(parse("x*(1-0.5*ln(x))"), 2.0, order=2, step=1e-5) == pytest.approx(-0.25, abs=1e-6)


def test_derivative_domain_error_inside_stencil():
    with pytest.raises(DomainError):
        derivative_fd(parse("ln(x)"), 1e-7, order=1, step=1e-6)


_LEAVES = st.sampled_from(["x", "t", "a", "b", "1.5", "2", "0.25"])


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})")
    unary = children.map(lambda c: f"-{c}")
    calls = st.tuples(st.sampled_from(["exp", "abs"]), children).map(lambda p: f"{p[0]}(0.1*{p[1]})")
    pairs = st.tuples(st.sampled_from(["min", "max"]), children, children).map(lambda p: f"{p[0]}({p[1]}, {p[2]})")
    power = children.map(lambda c: f"{c}^2")
    return st.one_of(binary, unary, calls, pairs, power)


EXPRESSIONS = st.recursive(_LEAVES, _combine, max_leaves=12)


@settings(max_examples=60, deadline=None)
@given(EXPRESSIONS)
def test_print_parse_round_trip(source):
    e = parse(source)
    again = parse(e.to_source())
    assert again.parameters == e.parameters
    rng = np.random.default_rng(7)
    for _ in range(100):
        x, t = rng.uniform(-2, 2, size=2)
        params = {"a": rng.uniform(-1, 1), "b": rng.uniform(-1, 1)}
        assert _outcome(e, x, t, params) == _outcome(again, x, t, params)


def _outcome(e, x, t, params):
    try:
        return evaluate(e, x, t, params)
    except DomainError:
        return "domain error"
