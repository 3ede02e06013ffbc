"""Short-rate diffusion models, payoffs and discount-rate caps.

A model is a drift/volatility pair for ``dX = beta(X, t) dt + sigma(X, t) dB``
together with domain metadata.  Models specified only for positive rates
(CIR, Dothan, exponential Vasicek, Black-Karasinski, Mercurio-Moraleda) are
always evaluable on the whole real line through the extension
``sigma(x) = 0`` and ``beta(x) = beta(0)`` for ``x < 0``; their ``domain``
flag records that the natural state space is ``[0, inf)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import expr as _expr
from .affine import AffineParams

__all__ = [
    "Domain",
    "ModelError",
    "GrowthBoundError",
    "PiecewiseLinear",
    "ShortRateModel",
    "Payoff",
    "RateCap",
    "apply_cap",
    "registry",
    "custom",
    "from_spec",
    "embed_full_line",
    "REGISTRY_NAMES",
    "DEFAULT_PARAMS",
]

Coefficient = Callable[[np.ndarray, float], np.ndarray]

REGISTRY_NAMES = ("V", "CIR", "D", "EV", "HW", "BK", "MM")

# Parameter sets used by the Table 2 report and the test-suite.
DEFAULT_PARAMS: dict[str, dict] = {
    "V": {"k": 0.86, "theta": 0.08, "sigma": 0.01},
    "CIR": {"k": 0.5, "theta": 0.06, "sigma": 0.2},
    "D": {"b": 0.05, "sigma": 0.2},
    "EV": {"eta": 0.02, "a": 0.5, "sigma": 0.2},
    "HW": {"k": 0.86, "sigma": 0.01, "theta": [[0.0, 0.06], [2.0, 0.08], [5.0, 0.09], [10.0, 0.09]]},
    "BK": {"a": 0.5, "sigma": 0.2, "eta": [[0.0, 0.02], [5.0, 0.03], [10.0, 0.03]]},
    "MM": {"lambda": 0.6, "gamma": 0.5, "sigma": 0.2, "eta": [[0.0, 0.02], [5.0, 0.03], [10.0, 0.03]]},
}


class ModelError(ValueError):
    """Invalid model construction (parameter constraints, domain conditions)."""


class GrowthBoundError(ModelError):
    """Linear growth bound on the coefficients violated on an evaluation grid."""


class Domain(str, enum.Enum):
    FULL = "full"
    HALF = "half"


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear function of time given by ``(t, value)`` knots.

    Constant beyond the first and last knot.
    """

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        if not knots:
            raise ModelError("time table needs at least one knot")
        ts = [t for t, _ in knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ModelError("time table knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def of(cls, value) -> "PiecewiseLinear":
        if isinstance(value, PiecewiseLinear):
            return value
        if np.ndim(value) == 0:
            return cls(((0.0, float(value)),))
        return cls(tuple(tuple(row) for row in value))

    def __call__(self, t):
        ts, vs = zip(*self.knots)
        out = np.interp(t, ts, vs)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.knots])

    def to_list(self) -> list:
        return [list(k) for k in self.knots]


@dataclass(frozen=True)
class ShortRateModel:
    name: str
    domain: Domain
    drift: Coefficient
    vol: Coefficient
    growth_constant: float
    time_dependent: bool = False
    drift_x: Optional[Coefficient] = None
    drift_xx: Optional[Coefficient] = None
    alpha_x: Optional[Coefficient] = None
    alpha_xx: Optional[Coefficient] = None
    affine: Optional[AffineParams] = None
    spec: Mapping = field(default_factory=dict, compare=False)

    def alpha(self, x, t=0.0):
        """Half the squared volatility."""
        s = self.vol(x, t)
        return 0.5 * s * s

    @property
    def has_analytic_derivatives(self) -> bool:
        return None not in (self.drift_x, self.drift_xx, self.alpha_x, self.alpha_xx)

    def growth_violation(self, x, t_values) -> float:
        """Largest excess of |sigma|/(1+x+) or |beta|/(1+|x|) over D."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for t in np.atleast_1d(t_values):
            s = np.abs(self.vol(x, float(t))) / (1.0 + np.maximum(x, 0.0))
            b = np.abs(self.drift(x, float(t))) / (1.0 + np.abs(x))
            worst = max(worst, float(np.max(s)), float(np.max(b)))
        return worst - self.growth_constant

    def check_growth(self, x, t_values) -> None:
        excess = self.growth_violation(x, t_values)
        if excess > 1e-12 * max(1.0, self.growth_constant):
            raise GrowthBoundError(
                f"model {self.name!r} violates the growth bound with D="
                f"{self.growth_constant:.6g} by {excess:.3g} on the evaluation grid"
            )


# -- helpers -----------------------------------------------------------------

_GROWTH_T = np.linspace(0.0, 30.0, 61)


def _estimate_growth(drift, vol, domain: Domain, t_values=_GROWTH_T) -> float:
    lo = -50.0 if domain is Domain.FULL else 0.0
    x = np.linspace(lo, 50.0, 4001)
    worst = 0.0
    for t in t_values:
        s = np.abs(vol(x, float(t))) / (1.0 + np.maximum(x, 0.0))
        b = np.abs(drift(x, float(t))) / (1.0 + np.abs(x))
        worst = max(worst, float(np.max(s)), float(np.max(b)))
    if not np.isfinite(worst):
        raise ModelError("coefficients are not finite on the growth window")
    return max(1.1 * worst, 1e-8)


def _growth_times(*tables: PiecewiseLinear) -> np.ndarray:
    knots = [t for table in tables for t, _ in table.knots]
    return np.unique(np.concatenate([_GROWTH_T, knots]))


def _check_halfline(model_name, drift, vol, t_values) -> None:
    for t in t_values:
        a0 = 0.5 * float(vol(np.array(0.0), float(t))) ** 2
        b0 = float(drift(np.array(0.0), float(t)))
        if a0 != 0.0:
            raise ModelError(f"{model_name}: half-line model needs alpha(0,t)=0, got {a0:g} at t={t:g}")
        if b0 < 0.0:
            raise ModelError(f"{model_name}: half-line model needs beta(0,t)>=0, got {b0:g} at t={t:g}")


def _pos(x):
    return np.maximum(x, 0.0)


def _safe_log(x):
    # log on the positive part; 1.0 where x <= 0 so the result is finite
    return np.log(np.where(x > 0, x, 1.0))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ModelError(message)


# -- registry ----------------------------------------------------------------


def vasicek(k: float, theta: float, sigma: float) -> ShortRateModel:
    _require(k > 0 and theta > 0, "Vasicek needs k > 0 and theta > 0")
    _require(sigma >= 0, "sigma must be non-negative")

    def drift(x, t):
        return k * (theta - np.asarray(x, dtype=float))

    def vol(x, t):
        return np.full(np.shape(x), float(sigma))

    return ShortRateModel(
        name="V",
        domain=Domain.FULL,
        drift=drift,
        vol=vol,
        growth_constant=_estimate_growth(drift, vol, Domain.FULL),
        drift_x=lambda x, t: np.full(np.shape(x), -float(k)),
        drift_xx=lambda x, t: np.zeros(np.shape(x)),
        alpha_x=lambda x, t: np.zeros(np.shape(x)),
        alpha_xx=lambda x, t: np.zeros(np.shape(x)),
        affine=AffineParams(a=k * theta, b=k, c=sigma**2, d=0.0),
        spec={"type": "registry", "name": "V", "params": {"k": k, "theta": theta, "sigma": sigma}},
    )


def cir(k: float, theta: float, sigma: float) -> ShortRateModel:
    _require(k > 0 and theta > 0, "CIR needs k > 0 and theta > 0")
    _require(sigma >= 0, "sigma must be non-negative")

    def drift(x, t):
        return k * (theta - _pos(np.asarray(x, dtype=float)))

    def vol(x, t):
        return sigma * np.sqrt(_pos(np.asarray(x, dtype=float)))

    model = ShortRateModel(
        name="CIR",
        domain=Domain.HALF,
        drift=drift,
        vol=vol,
        growth_constant=_estimate_growth(drift, vol, Domain.HALF),
        drift_x=lambda x, t: np.where(np.asarray(x) > 0, -float(k), 0.0),
        drift_xx=lambda x, t: np.zeros(np.shape(x)),
        alpha_x=lambda x, t: np.where(np.asarray(x) > 0, 0.5 * sigma**2, 0.0),
        alpha_xx=lambda x, t: np.zeros(np.shape(x)),
        affine=AffineParams(a=k * theta, b=k, c=0.0, d=sigma**2),
        spec={"type": "registry", "name": "CIR", "params": {"k": k, "theta": theta, "sigma": sigma}},
    )
    _check_halfline("CIR", drift, vol, [0.0])
    return model


def dothan(b: float, sigma: float) -> ShortRateModel:
    _require(sigma >= 0, "sigma must be non-negative")

    def drift(x, t):
        return b * _pos(np.asarray(x, dtype=float))

    def vol(x, t):
        return sigma * _pos(np.asarray(x, dtype=float))

    return ShortRateModel(
        name="D",
        domain=Domain.HALF,
        drift=drift,
        vol=vol,
        growth_constant=_estimate_growth(drift, vol, Domain.HALF),
        drift_x=lambda x, t: np.where(np.asarray(x) > 0, float(b), 0.0),
        drift_xx=lambda x, t: np.zeros(np.shape(x)),
        alpha_x=lambda x, t: sigma**2 * _pos(np.asarray(x, dtype=float)),
        alpha_xx=lambda x, t: np.where(np.asarray(x) > 0, sigma**2, 0.0),
        spec={"type": "registry", "name": "D", "params": {"b": b, "sigma": sigma}},
    )


def _log_mean_reverting(name, eta: PiecewiseLinear, speed: Callable[[float], float], sigma, spec, time_dependent):
    """Shared construction for EV, BK and MM: dX = X(eta_t - c(t) ln X)dt + sigma X dB."""

    def drift(x, t):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, x * (eta(t) - speed(t) * _safe_log(x)), 0.0)

    def vol(x, t):
        return sigma * _pos(np.asarray(x, dtype=float))

    def drift_x(x, t):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, eta(t) - speed(t) * (_safe_log(x) + 1.0), 0.0)

    def drift_xx(x, t):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -speed(t) / np.where(x > 0, x, 1.0), 0.0)

    t_values = _growth_times(eta)
    _check_halfline(name, drift, vol, t_values)
    return ShortRateModel(
        name=name,
        domain=Domain.HALF,
        drift=drift,
        vol=vol,
        growth_constant=_estimate_growth(drift, vol, Domain.HALF, t_values),
        time_dependent=time_dependent,
        drift_x=drift_x,
        drift_xx=drift_xx,
        alpha_x=lambda x, t: sigma**2 * _pos(np.asarray(x, dtype=float)),
        alpha_xx=lambda x, t: np.where(np.asarray(x) > 0, sigma**2, 0.0),
        spec=spec,
    )


def exponential_vasicek(eta: float, a: float, sigma: float) -> ShortRateModel:
    _require(eta > 0 and a > 0, "EV needs eta > 0 and a > 0")
    _require(sigma >= 0, "sigma must be non-negative")
    spec = {"type": "registry", "name": "EV", "params": {"eta": eta, "a": a, "sigma": sigma}}
    return _log_mean_reverting("EV", PiecewiseLinear.of(eta), lambda t: a, sigma, spec, False)


def hull_white(k: float, theta, sigma: float) -> ShortRateModel:
    table = PiecewiseLinear.of(theta)
    _require(k > 0, "HW needs k > 0")
    _require(bool(np.all(table.values > 0)), "HW needs theta_t > 0")
    _require(sigma >= 0, "sigma must be non-negative")

    def drift(x, t):
        return k * (table(t) - np.asarray(x, dtype=float))

    def vol(x, t):
        return np.full(np.shape(x), float(sigma))

    return ShortRateModel(
        name="HW",
        domain=Domain.FULL,
        drift=drift,
        vol=vol,
        growth_constant=_estimate_growth(drift, vol, Domain.FULL, _growth_times(table)),
        time_dependent=True,
        drift_x=lambda x, t: np.full(np.shape(x), -float(k)),
        drift_xx=lambda x, t: np.zeros(np.shape(x)),
        alpha_x=lambda x, t: np.zeros(np.shape(x)),
        alpha_xx=lambda x, t: np.zeros(np.shape(x)),
        affine=AffineParams(a=lambda t: k * table(t), b=k, c=sigma**2, d=0.0),
        spec={"type": "registry", "name": "HW", "params": {"k": k, "sigma": sigma, "theta": table.to_list()}},
    )


def black_karasinski(eta, a: float, sigma: float) -> ShortRateModel:
    table = PiecewiseLinear.of(eta)
    _require(a > 0, "BK needs a > 0")
    _require(bool(np.all(table.values > 0)), "BK needs eta_t > 0")
    _require(sigma >= 0, "sigma must be non-negative")
    spec = {"type": "registry", "name": "BK", "params": {"a": a, "sigma": sigma, "eta": table.to_list()}}
    return _log_mean_reverting("BK", table, lambda t: a, sigma, spec, True)


def mercurio_moraleda(eta, lam: float, gamma: float, sigma: float) -> ShortRateModel:
    table = PiecewiseLinear.of(eta)
    _require(gamma > 0, "MM needs gamma > 0")
    _require(lam >= gamma, f"MM needs lambda >= gamma, got lambda={lam:g} < gamma={gamma:g}")
    _require(bool(np.all(table.values > 0)), "MM needs eta_t > 0")
    _require(sigma >= 0, "sigma must be non-negative")

    def speed(t):
        return lam - gamma / (1.0 + gamma * t)

    spec = {
        "type": "registry",
        "name": "MM",
        "params": {"lambda": lam, "gamma": gamma, "sigma": sigma, "eta": table.to_list()},
    }
    return _log_mean_reverting("MM", table, speed, sigma, spec, True)


def registry(name: str, params: Mapping | None = None, **kwargs) -> ShortRateModel:
    """Build one of the seven standard short-rate models by its short name.

    Parameters default to :data:`DEFAULT_PARAMS`; time-dependent levels
    (``theta`` for HW, ``eta`` for BK and MM) may be given as a number or
    as a ``[[t, value], ...]`` table.
    """
    if name not in REGISTRY_NAMES:
        raise ModelError(f"unknown registry model {name!r}; expected one of {REGISTRY_NAMES}")
    p = dict(DEFAULT_PARAMS[name])
    p.update(params or {})
    p.update(kwargs)
    try:
        if name == "V":
            return vasicek(p["k"], p["theta"], p["sigma"])
        if name == "CIR":
            return cir(p["k"], p["theta"], p["sigma"])
        if name == "D":
            return dothan(p["b"], p["sigma"])
        if name == "EV":
            return exponential_vasicek(p["eta"], p["a"], p["sigma"])
        if name == "HW":
            return hull_white(p["k"], p["theta"], p["sigma"])
        if name == "BK":
            return black_karasinski(p["eta"], p["a"], p["sigma"])
        return mercurio_moraleda(p["eta"], p["lambda"], p["gamma"], p["sigma"])
    except KeyError as exc:
        raise ModelError(f"{name}: missing parameter {exc.args[0]!r}") from None


def custom(
    drift_expr,
    vol_expr,
    domain: Domain | str = Domain.FULL,
    params: Mapping | None = None,
    theta_table=None,
    name: str = "custom",
    growth_times: Sequence[float] | None = None,
) -> ShortRateModel:
    """Model from coefficient expressions in ``x`` and ``t``.

    ``theta_table``, when given, is bound to the expression parameter
    ``theta_t`` as a piecewise-linear function of time.  Derivatives are
    central finite differences of the expressions.
    """
    domain = Domain(domain)
    drift_e = drift_expr if isinstance(drift_expr, _expr.Expression) else _expr.parse(drift_expr)
    vol_e = vol_expr if isinstance(vol_expr, _expr.Expression) else _expr.parse(vol_expr)
    bound: dict = {k: float(v) for k, v in (params or {}).items()}
    table = None
    if theta_table is not None:
        table = PiecewiseLinear.of(theta_table)
        bound["theta_t"] = table
    missing = (drift_e.parameters | vol_e.parameters) - set(bound)
    if missing:
        raise ModelError(f"unbound parameter(s) {sorted(missing)}")

    def drift(x, t):
        return _expr.evaluate(drift_e, np.asarray(x, dtype=float), t, bound)

    def vol(x, t):
        return _expr.evaluate(vol_e, np.asarray(x, dtype=float), t, bound)

    def drift_x(x, t):
        return _expr.central_difference(lambda z: drift(z, t), x, 1)

    def drift_xx(x, t):
        return _expr.central_difference(lambda z: drift(z, t), x, 2)

    def alpha(z, t):
        s = vol(z, t)
        return 0.5 * s * s

    time_dep = "t" in _expr_vars(drift_e) | _expr_vars(vol_e) or table is not None
    t_values = np.asarray(growth_times) if growth_times is not None else (
        _growth_times(table) if table is not None else _GROWTH_T
    )
    try:
        growth = _estimate_growth(drift, vol, domain, t_values)
    except _expr.DomainError as exc:
        raise ModelError(f"coefficient evaluation failed on the growth window: {exc}") from None
    if domain is Domain.HALF:
        _check_halfline(name, drift, vol, t_values)
    spec = {
        "type": "custom",
        "name": name,
        "domain": domain.value,
        "drift": drift_e.source or drift_e.to_source(),
        "vol": vol_e.source or vol_e.to_source(),
        "params": dict(sorted((k, float(v)) for k, v in (params or {}).items())),
    }
    if table is not None:
        spec["theta_table"] = table.to_list()
    return ShortRateModel(
        name=name,
        domain=domain,
        drift=drift,
        vol=vol,
        growth_constant=growth,
        time_dependent=bool(time_dep),
        drift_x=drift_x,
        drift_xx=drift_xx,
        alpha_x=lambda x, t: _expr.central_difference(lambda z: alpha(z, t), x, 1),
        alpha_xx=lambda x, t: _expr.central_difference(lambda z: alpha(z, t), x, 2),
        spec=spec,
    )


def _expr_vars(e: _expr.Expression) -> set:
    found = set()

    def walk(node):
        if isinstance(node, _expr.Var):
            found.add(node.name)
        for child in ("arg", "left", "right"):
            if hasattr(node, child):
                walk(getattr(node, child))

    walk(e.ast)
    return found


def embed_full_line(model: ShortRateModel) -> ShortRateModel:
    """View a half-line model on the whole real line.

    Coefficients are already extended (``sigma = 0``, ``beta = beta(0)``
    for negative rates), so only the domain flag changes.
    """
    if model.domain is Domain.FULL:
        return model
    spec = dict(model.spec)
    spec["embedding"] = "full"
    return replace(model, domain=Domain.FULL, spec=spec)


def from_spec(spec: Mapping) -> ShortRateModel:
    """Build a model from its JSON description (see the README)."""
    kind = spec.get("type", "registry")
    params = dict(spec.get("params", {}))
    if kind == "registry":
        name = spec.get("name")
        if "theta_table" in spec:
            key = "theta" if name == "HW" else "eta"
            params[key] = spec["theta_table"]
        model = registry(name, params)
        if spec.get("domain") == "full":
            model = embed_full_line(model)
        return model
    if kind == "custom":
        for key in ("drift", "vol"):
            if key not in spec:
                raise ModelError(f"custom model spec needs {key!r}")
        return custom(
            spec["drift"],
            spec["vol"],
            spec.get("domain", "full"),
            params,
            theta_table=spec.get("theta_table"),
            name=spec.get("name", "custom"),
        )
    raise ModelError(f"unknown model type {kind!r}")


# -- payoffs -----------------------------------------------------------------


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff ``g`` with its shape flags and growth bound.

    ``growth = (M, K)`` asserts ``0 <= g(x) <= M max(exp(-K x), 1)``.
    ``lipschitz_truncation`` optionally maps a truncation level ``k`` to the
    Lipschitz constant of ``min(g, k)``; it is metadata only.
    """

    g: Callable[[np.ndarray], np.ndarray]
    name: str = "payoff"
    convex: bool = False
    decreasing: bool = False
    growth: tuple = (1.0, 0.0)
    lipschitz_truncation: Optional[Callable[[float], float]] = None
    spec: Mapping = field(default_factory=dict, compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.g(x), dtype=float), x.shape).copy()

    def validate(self, x_lo: float = -1.0, x_hi: float = 2.0, n: int = 1001) -> None:
        """Check the declared flags and growth bound on an ``n``-point grid."""
        x = np.linspace(x_lo, x_hi, n)
        y = self(x)
        if not np.all(np.isfinite(y)):
            raise ModelError(f"payoff {self.name!r} is not finite on the test grid")
        m, k = self.growth
        scale = max(1.0, float(np.max(np.abs(y))))
        slack = 1e-12 * scale
        if np.any(y < -slack) or np.any(y > m * np.maximum(np.exp(-k * x), 1.0) + slack):
            raise ModelError(f"payoff {self.name!r} violates 0 <= g <= M max(exp(-Kx), 1)")
        if self.convex and np.any(y[:-2] + y[2:] - 2.0 * y[1:-1] < -slack):
            raise ModelError(f"payoff {self.name!r} flagged convex but fails midpoint convexity")
        if self.decreasing and np.any(y[1:] > y[:-1] + slack):
            raise ModelError(f"payoff {self.name!r} flagged decreasing but increases")

    @classmethod
    def bond(cls) -> "Payoff":
        return cls(
            g=lambda x: np.ones_like(x),
            name="bond",
            convex=True,
            decreasing=True,
            growth=(1.0, 0.0),
            lipschitz_truncation=lambda k: 0.0,
            spec={"type": "bond"},
        )

    @classmethod
    def from_expression(
        cls,
        source: str,
        params: Mapping | None = None,
        convex: bool = False,
        decreasing: bool = False,
        growth=(1.0, 0.0),
        name: str | None = None,
    ) -> "Payoff":
        e = _expr.parse(source)
        bound = {k: float(v) for k, v in (params or {}).items()}
        missing = e.parameters - set(bound)
        if missing:
            raise ModelError(f"unbound payoff parameter(s) {sorted(missing)}")
        return cls(
            g=lambda x: _expr.evaluate(e, x, 0.0, bound),
            name=name or source,
            convex=convex,
            decreasing=decreasing,
            growth=tuple(growth),
            spec={
                "type": "expr",
                "expr": source,
                "params": dict(sorted(bound.items())),
                "convex": convex,
                "decreasing": decreasing,
                "growth": list(growth),
            },
        )

    @classmethod
    def softplus_put(cls, strike: float, width: float = 0.1) -> "Payoff":
        """Smooth convex decreasing payoff ``width*log(1+exp((strike-x)/width))``.

        Linear with slope -1 well below ``strike``, flat (zero) well above.
        """
        w = float(width)

        def g(x):
            return w * np.logaddexp(0.0, (strike - x) / w)

        # g <= max(strike, 0) + w log 2 - x  <=  M max(e^{-x}, 1)
        m = max(strike, 0.0) + w * np.log(2.0) + 1.0
        return cls(
            g=g,
            name=f"softplus_put(K={strike:g}, w={w:g})",
            convex=True,
            decreasing=True,
            growth=(m, 1.0),
            lipschitz_truncation=lambda k: 1.0,
            spec={"type": "softplus_put", "strike": strike, "width": w},
        )


def payoff_from_spec(spec: Mapping | None) -> Payoff:
    if spec is None or spec.get("type", "bond") == "bond":
        return Payoff.bond()
    kind = spec["type"]
    if kind == "expr":
        return Payoff.from_expression(
            spec["expr"],
            spec.get("params"),
            convex=bool(spec.get("convex", False)),
            decreasing=bool(spec.get("decreasing", False)),
            growth=tuple(spec.get("growth", (1.0, 0.0))),
        )
    if kind == "softplus_put":
        return Payoff.softplus_put(float(spec["strike"]), float(spec.get("width", 0.1)))
    raise ModelError(f"unknown payoff type {kind!r}")


# -- rate cap ----------------------------------------------------------------


@dataclass(frozen=True)
class RateCap:
    """Smooth concave discount rate: ``x`` below ``level``, constant above ``level + width``.

    The join on ``[level, level + width]`` is the cubic Hermite with value
    ``level`` and slope 1 at the left end and slope 0 at the right end; with
    right-end value ``level + width/2`` it reduces to the quadratic
    ``level + s - s^2/(2 width)``, which is concave.
    """

    level: float
    width: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.level):
            raise ModelError("cap level must be finite")
        if not self.width > 0:
            raise ModelError("cap transition width must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        s = np.clip(x - self.level, 0.0, self.width)
        capped = self.level + s - s * s / (2.0 * self.width)
        out = np.where(x <= self.level, x, capped)
        return float(out) if out.ndim == 0 else out

    @property
    def ceiling(self) -> float:
        return self.level + 0.5 * self.width

    def to_dict(self) -> dict:
        return {"level": self.level, "width": self.width}


def apply_cap(cap: RateCap | None) -> Callable[[np.ndarray], np.ndarray]:
    """Discount-rate function used in place of the identity (identity if no cap)."""
    if cap is None:
        return lambda x: np.asarray(x, dtype=float)
    return cap
