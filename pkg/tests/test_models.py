import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termshape.expr import central_difference
from termshape.models import (
    REGISTRY_NAMES,
    Domain,
    GrowthBoundError,
    ModelError,
    Payoff,
    RateCap,
    custom,
    embed_full_line,
    from_spec,
    registry,
)

EPS = np.finfo(float).eps
T_SAMPLES = (0.0, 1.3, 4.0, 9.5)


def test_vasicek_drift_value():
    m = registry("V", k=0.86, theta=0.08, sigma=0.01)
    assert m.drift(np.array(0.05), 0.0) == pytest.approx(0.0258, abs=1e-15)


def test_domains():
    for name in REGISTRY_NAMES:
        expected = Domain.FULL if name in ("V", "HW") else Domain.HALF
        assert registry(name).domain is expected
    assert registry("CIR").alpha(np.array(0.0), 0.0) == 0.0


def test_time_dependence_flags():
    for name in REGISTRY_NAMES:
        assert registry(name).time_dependent == (name in ("HW", "BK", "MM"))


def test_mercurio_moraleda_constraint():
    with pytest.raises(ModelError, match="lambda >= gamma"):
        registry("MM", {"lambda": 0.5, "gamma": 1.0})


@pytest.mark.parametrize("name,params", [("V", {"k": -1}), ("CIR", {"theta": 0}), ("EV", {"a": 0}), ("X", {})])
def test_parameter_errors(name, params):
    with pytest.raises(ModelError):
        registry(name, params)


@pytest.mark.parametrize("name", REGISTRY_NAMES)
def test_halfline_origin_conditions(name):
    m = registry(name)
    if m.domain is Domain.HALF:
        for t in T_SAMPLES:
            assert m.alpha(np.array(0.0), t) == 0.0
            assert m.drift(np.array(0.0), t) >= 0.0


@pytest.mark.parametrize("name", REGISTRY_NAMES)
def test_growth_bound_holds(name):
    m = registry(name)
    lo = -50.0 if m.domain is Domain.FULL else 0.0
    x = np.linspace(lo, 50.0, 5001)
    assert m.growth_violation(x, np.linspace(0, 10, 21)) <= 0.0
    m.check_growth(x, T_SAMPLES)


@pytest.mark.parametrize("name", REGISTRY_NAMES)
def test_analytic_derivatives_match_finite_differences(name):
    """Relative agreement to 1e-6 beyond the rounding floor of the stencil."""
    m = registry(name)
    assert m.has_analytic_derivatives
    x = np.geomspace(1e-3, 10, 200)
    if m.domain is Domain.FULL:
        x = np.concatenate([-x, x])
    pairs = [(m.drift, m.drift_x, 1), (m.drift, m.drift_xx, 2), (m.alpha, m.alpha_x, 1), (m.alpha, m.alpha_xx, 2)]
    for t in T_SAMPLES:
        for fn, exact, order in pairs:
            h = (1e-5 if order == 1 else 3e-4) * np.abs(x)
            h = (x + h) - x
            fd = central_difference(lambda z: fn(z, t), x, order, h)
            an = exact(x, t)
            size = lambda z: np.abs(fn(z, t))
            rounding = 8 * EPS * (size(x - h) + 2 * size(x) + size(x + h)) / h**order
            assert np.all(np.abs(fd - an) <= 1e-6 * np.abs(an) + rounding)


def test_custom_matches_registry_vasicek():
    params = {"k": 0.86, "theta": 0.08, "sigma": 0.01}
    c = custom("k*(theta-x)", "sigma", "full", params)
    v = registry("V", params)
    x = np.linspace(-3, 3, 301)
    for t in (0.0, 2.0):
        np.testing.assert_allclose(c.drift(x, t), v.drift(x, t), rtol=0, atol=1e-12)
        np.testing.assert_allclose(c.vol(x, t), v.vol(x, t), rtol=0, atol=1e-12)


def test_custom_growth_constant_estimate():
    m = custom("D*x", "0", "full", {"D": 0.5})
    assert m.growth_constant == pytest.approx(1.1 * 0.5 * 50 / 51, rel=1e-9)


def test_custom_unbound_and_domain_errors():
    with pytest.raises(ModelError):
        custom("k*x", "0")
    with pytest.raises(Exception):
        custom("ln(x)", "0", "full")


def test_custom_theta_table():
    m = custom("k*(theta_t - x)", "sigma", "full", {"k": 1.0, "sigma": 0.01}, theta_table=[[0, 0.0], [2, 0.2]])
    assert m.drift(np.array(0.0), 1.0) == pytest.approx(0.1)


def test_from_spec_and_embedding():
    m = from_spec({"type": "registry", "name": "CIR", "domain": "full"})
    assert m.domain is Domain.FULL
    x = np.array([-1.0, -0.1])
    np.testing.assert_array_equal(m.vol(x, 0.0), 0.0)
    v = registry("V")
    assert embed_full_line(v) is v
    c = from_spec({"type": "custom", "drift": "a - x", "vol": "0.01", "params": {"a": 0.1}})
    assert c.drift(np.array(0.0), 0.0) == pytest.approx(0.1)
    with pytest.raises(ModelError):
        from_spec({"type": "custom", "drift": "x"})


def test_ev_full_line_extension_is_zero():
    m = embed_full_line(registry("EV"))
    x = np.linspace(-5, 0, 11)
    np.testing.assert_array_equal(m.vol(x, 0.0), 0.0)
    np.testing.assert_array_equal(m.drift(x, 0.0), 0.0)


def test_cap_examples():
    cap = RateCap(3.0)
    assert cap(2.0) == 2.0
    assert cap(5.0) == cap(4.0)
    x = np.linspace(2.0, 5.0, 3001)
    y = cap(x)
    assert np.all(y[:-2] + y[2:] - 2 * y[1:-1] <= 1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(0.01, 4))
def test_cap_shape(level, width, gap):
    cap = RateCap(level, width)
    x = np.linspace(level - 3, level + width + 3, 2001)
    y = cap(x)
    assert np.all(np.diff(y) >= -1e-15)
    assert np.all(y <= x + 1e-15)
    assert np.all(y[:-2] + y[2:] - 2 * y[1:-1] <= 1e-12)
    np.testing.assert_array_equal(y[x <= level], x[x <= level])
    np.testing.assert_allclose(y[x >= level + width], cap.ceiling, rtol=0, atol=1e-14)
    # raising the level moves f up towards the identity
    assert np.all(cap(x) <= RateCap(level + gap, width)(x) + 1e-15)


def test_cap_validation():
    with pytest.raises(ModelError):
        RateCap(float("inf"))
    with pytest.raises(ModelError):
        RateCap(1.0, 0.0)


def test_payoffs_validate():
    Payoff.bond().validate()
    Payoff.softplus_put(0.5, 0.1).validate()
    Payoff.from_expression("max(c - x, 0)", {"c": 1}, convex=True, decreasing=True, growth=(3, 1)).validate()
    with pytest.raises(ModelError):
        Payoff.from_expression("-(x^2)", convex=True).validate()
    with pytest.raises(ModelError):
        Payoff.from_expression("max(x, 0)", decreasing=True, growth=(3, 0)).validate()
    with pytest.raises(ModelError):
        Payoff.from_expression("exp(-5*x)", growth=(1, 1)).validate()
