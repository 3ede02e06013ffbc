import math

import numpy as np
import pytest

from oracles import cir_bond, ou_moments_ode, vasicek_bond
from termshape.mc import (
    McConfig,
    McError,
    coupled_compare,
    exact_ou_moments,
    exact_ou_sample,
    price,
    worker_count,
)
from termshape.models import Payoff, RateCap, custom, registry

BOND = Payoff.bond()


def test_deterministic_path_is_exact():
    est = price(custom("0", "0"), BOND, 0.05, 0.0, 1.0, McConfig(n_paths=1000, n_steps=7))
    assert est.mean == pytest.approx(math.exp(-0.05), rel=1e-14)
    assert est.stderr == 0.0


@pytest.mark.parametrize("k,theta,sigma,t,T", [(0.86, 0.08, 0.01, 0.0, 5.0), (0.3, -0.02, 0.4, 1.0, 2.5)])
def test_exact_moments_match_moment_odes(k, theta, sigma, t, T):
    mean, cov = exact_ou_moments(k, theta, sigma, 0.05, t, T)
    m_ref, c_ref = ou_moments_ode(k, lambda s: theta, sigma, 0.05, t, T)
    np.testing.assert_allclose(mean, m_ref, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(cov, c_ref, rtol=1e-8, atol=1e-14)


def test_exact_moments_time_dependent_level():
    table = [[0.0, 0.06], [2.0, 0.08], [5.0, 0.09], [10.0, 0.09]]
    fn = lambda s: float(np.interp(s, [p[0] for p in table], [p[1] for p in table]))
    mean, cov = exact_ou_moments(0.86, table, 0.01, 0.05, 0.5, 6.0)
    m_ref, c_ref = ou_moments_ode(0.86, fn, 0.01, 0.05, 0.5, 6.0)
    np.testing.assert_allclose(mean, m_ref, rtol=1e-6)
    np.testing.assert_allclose(cov, c_ref, rtol=1e-8)


def test_brownian_limit_of_moments():
    s, x0, tau = 0.3, 0.05, 2.0
    mean, cov = exact_ou_moments(1e-9, 0.0, s, x0, 0.0, tau)
    np.testing.assert_allclose(mean, [x0, x0 * tau], rtol=1e-7)
    expected = s * s * np.array([[tau, tau**2 / 2], [tau**2 / 2, tau**3 / 3]])
    np.testing.assert_allclose(cov, expected, rtol=1e-7)


def test_exact_sampler_without_noise():
    m = registry("V", sigma=0.0)
    x, i = exact_ou_sample(m, 0.05, 0.0, 3.0, 100, seed=1)
    mean, _ = exact_ou_moments(0.86, 0.08, 0.0, 0.05, 0.0, 3.0)
    np.testing.assert_allclose(x, mean[0], rtol=1e-14)
    np.testing.assert_allclose(i, mean[1], rtol=1e-14)


def test_exact_sampler_moments():
    m = registry("V", sigma=0.1)
    x, i = exact_ou_sample(m, 0.05, 0.0, 2.0, 200_000, seed=11)
    mean, cov = exact_ou_moments(0.86, 0.08, 0.1, 0.05, 0.0, 2.0)
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(np.array([x.mean(), i.mean()]) - mean) <= 4 * sd / math.sqrt(x.size))
    np.testing.assert_allclose(np.cov(np.stack([x, i])), cov, rtol=0.02)


def test_exact_sampler_rejects_other_models():
    with pytest.raises(McError):
        exact_ou_sample(registry("CIR"), 0.05, 0.0, 1.0, 10, seed=0)


def test_exact_vasicek_bond():
    est = price(registry("V"), BOND, 0.05, 0.0, 5.0, McConfig(n_paths=1_000_000, n_steps=1, scheme="exact-ou", seed=5))
    assert abs(est.mean - float(vasicek_bond(0.86, 0.08, 0.01, 0.05, 5.0))) <= 3 * est.stderr


def test_cir_full_truncation_against_closed_form():
    est = price(registry("CIR"), BOND, 0.04, 0.0, 1.0, McConfig(n_paths=100_000, n_steps=250, scheme="full-truncation-euler", seed=2))
    assert abs(est.mean - float(cir_bond(0.5, 0.06, 0.2, 0.04, 1.0))) <= 3 * est.stderr


def test_same_model_coupling_has_zero_difference():
    m = registry("V")
    res = coupled_compare(m, m, BOND, 0.05, 0.0, 1.0, McConfig(n_paths=4096, n_steps=50))
    assert res.diff_mean == 0.0 and res.diff_stderr == 0.0
    assert res.a.mean == res.b.mean


def test_coupling_shrinks_stderr():
    lo, hi = registry("V", theta=0.10), registry("V", theta=0.08)
    res = coupled_compare(hi, lo, BOND, 0.05, 0.0, 5.0, McConfig(n_paths=20_000, n_steps=100))
    assert res.diff_stderr < 0.2 * math.hypot(res.a.stderr, res.b.stderr)
    assert res.diff_mean >= -3 * res.diff_stderr


def test_antithetic_is_unbiased():
    m = registry("V", sigma=0.05)
    plain = price(m, BOND, 0.05, 0.0, 2.0, McConfig(n_paths=50_000, n_steps=50, seed=4))
    anti = price(m, BOND, 0.05, 0.0, 2.0, McConfig(n_paths=50_000, n_steps=50, seed=4, antithetic=True))
    assert abs(plain.mean - anti.mean) <= 4 * math.hypot(plain.stderr, anti.stderr)
    assert anti.stderr < plain.stderr


@pytest.mark.parametrize("scheme,model", [("euler", "V"), ("full-truncation-euler", "CIR"), ("exact-ou", "HW")])
def test_worker_count_does_not_change_results(scheme, model):
    m = registry(model)
    runs = [
        price(m, BOND, 0.05, 0.0, 2.0, McConfig(n_paths=10_001, n_steps=40, seed=9, scheme=scheme, workers=w))
        for w in (1, 2, 5)
    ]
    assert all(r == runs[0] for r in runs)


def test_thread_env_caps_workers(monkeypatch):
    monkeypatch.setenv("TERMSHAPE_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(1) == 1


def test_trapezoid_bias_decays():
    m = registry("V")
    exact = float(vasicek_bond(0.86, 0.08, 0.01, 0.05, 5.0))
    bias = [abs(price(m, BOND, 0.05, 0.0, 5.0, McConfig(n_paths=20_000, n_steps=n, seed=3)).mean - exact) for n in (10, 20, 40, 80)]
    assert all(a > b for a, b in zip(bias, bias[1:]))


def test_scheme_domain_mismatch():
    with pytest.raises(McError):
        price(registry("CIR"), BOND, 0.05, 0.0, 1.0, McConfig(n_paths=10, scheme="euler"))
    with pytest.raises(McError):
        price(registry("CIR"), BOND, 0.05, 0.0, 1.0, McConfig(n_paths=10, scheme="exact-ou"))


def test_config_validation():
    with pytest.raises(McError):
        McConfig(n_paths=0)
    with pytest.raises(McError):
        McConfig(scheme="milstein")
    with pytest.raises(McError):
        McConfig(n_paths=3, antithetic=True)
    with pytest.raises(McError):
        McConfig(seed=-1)


def test_cap_raises_price():
    m = registry("V", sigma=0.1)
    cfg = McConfig(n_paths=20_000, n_steps=50)
    free = price(m, BOND, 0.05, 0.0, 5.0, cfg)
    capped = price(m, BOND, 0.05, 0.0, 5.0, cfg, rate_cap=RateCap(0.0))
    assert capped.mean > free.mean


def test_estimate_serialisation():
    est = price(registry("V"), BOND, 0.05, 0.0, 1.0, McConfig(n_paths=100, n_steps=5, seed=1))
    assert set(est.to_dict()) == {"mean", "stderr", "n_paths", "n_steps", "seed", "scheme", "config_hash"}
