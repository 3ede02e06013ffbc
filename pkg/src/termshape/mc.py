"""Monte Carlo pricing of ``E[exp(-int X ds) g(X_T)]``.

Paths are grouped in fixed blocks of :data:`BLOCK` paths.  Block ``b``
draws its normals from a Philox counter-based generator keyed by
``(seed, b)``, so every path's random stream depends only on the seed and
the path index.  Blocks may run on any number of threads; per-path values
are concatenated in path order before the reduction, which makes every
estimate bit-identical regardless of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ._canonical import digest
from .models import Domain, Payoff, PiecewiseLinear, RateCap, ShortRateModel, apply_cap, custom

__all__ = [
    "BLOCK",
    "SCHEMES",
    "McError",
    "McConfig",
    "McEstimate",
    "CoupledResult",
    "ContinuityResult",
    "price",
    "coupled_compare",
    "continuity_experiment",
    "exact_ou_moments",
    "exact_ou_sample",
    "cir_mollified",
    "worker_count",
]

BLOCK = 4096
SCHEMES = ("euler", "full-truncation-euler", "exact-ou")


class McError(ValueError):
    pass


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int = 250
    seed: int = 0
    scheme: str = "euler"
    antithetic: bool = False
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise McError("n_paths and n_steps must be >= 1")
        if self.scheme not in SCHEMES:
            raise McError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.antithetic and self.n_paths % 2:
            raise McError("antithetic sampling needs an even n_paths")
        if not 0 <= self.seed < 2**64:
            raise McError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        # worker count never affects results, so it is not part of the hash
        return {
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "scheme": self.scheme,
            "antithetic": self.antithetic,
        }


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    n_steps: int
    seed: int
    scheme: str
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "scheme": self.scheme,
            "config_hash": self.config_hash,
        }


@dataclass(frozen=True)
class CoupledResult:
    a: McEstimate
    b: McEstimate
    diff_mean: float
    diff_stderr: float

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict(), "diff_mean": self.diff_mean, "diff_stderr": self.diff_stderr}


@dataclass(frozen=True)
class ContinuityResult:
    ns: tuple
    estimates: tuple
    reference: McEstimate
    sup_moments: tuple  # E[sup_s |X^n_s - X_s|^2] per n
    sup_stderrs: tuple

    def to_dict(self) -> dict:
        return {
            "ns": list(self.ns),
            "estimates": [e.to_dict() for e in self.estimates],
            "reference": self.reference.to_dict(),
            "sup_moments": list(self.sup_moments),
            "sup_stderrs": list(self.sup_stderrs),
        }


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("TERMSHAPE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


# -- random streams ----------------------------------------------------------


def _block_normals(seed: int, block: int, shape: tuple, antithetic: bool) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=(seed << 64) | block))
    if not antithetic:
        return rng.standard_normal(shape)
    half = rng.standard_normal(shape[:-1] + (shape[-1] // 2,))
    return np.concatenate([half, -half], axis=-1)


def _blocks(n_paths: int):
    return [(b, min(BLOCK, n_paths - b * BLOCK)) for b in range(math.ceil(n_paths / BLOCK))]


def _run_blocks(fn: Callable, cfg: McConfig) -> list:
    blocks = _blocks(cfg.n_paths)
    workers = min(worker_count(cfg.workers), len(blocks))
    if workers <= 1:
        return [fn(b, n) for b, n in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda bn: fn(*bn), blocks))


# -- reduction ---------------------------------------------------------------


def _pair(values: np.ndarray, blocks_n: Sequence[int], antithetic: bool) -> np.ndarray:
    """Per-sample values: antithetic pairs are averaged within each block."""
    if not antithetic:
        return values
    out = []
    start = 0
    for n in blocks_n:
        v = values[start : start + n]
        out.append(0.5 * (v[: n // 2] + v[n // 2 :]))
        start += n
    return np.concatenate(out)


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    shift = samples[0]
    d = samples - shift
    mean = float(shift + np.mean(d))
    if samples.size < 2:
        return mean, 0.0
    var = float(np.sum((d - np.mean(d)) ** 2) / (samples.size - 1))
    return mean, math.sqrt(var / samples.size)


# -- path simulation ---------------------------------------------------------


def _check_scheme(model: ShortRateModel, scheme: str) -> None:
    if scheme == "exact-ou":
        if model.name not in ("V", "HW"):
            raise McError(f"exact-ou sampling needs a Vasicek or Hull-White model, got {model.name!r}")
    elif scheme == "euler" and model.domain is Domain.HALF:
        raise McError(f"half-line model {model.name!r} needs the full-truncation-euler scheme")


def _simulate(models, x0, t, T, n_steps, z, scheme, rate, track_sup=False):
    """Euler-type paths for several models driven by the same normals ``z``.

    Returns per-model ``(X_T, I)`` and, if ``track_sup``, the running
    ``max_k |X^m_k - X^0_k|^2`` of every model against the first one.
    """
    dt = (T - t) / n_steps
    sq = math.sqrt(dt)
    npaths = z.shape[1]
    xs = [np.full(npaths, float(x0)) for _ in models]
    acc = [np.zeros(npaths) for _ in models]
    sup = [np.zeros(npaths) for _ in models] if track_sup else None
    truncate = scheme == "full-truncation-euler"
    f_prev = [rate(x) for x in xs]
    for k in range(n_steps):
        tk = t + k * dt
        dw = sq * z[k]
        for m, model in enumerate(models):
            x = xs[m]
            xe = np.maximum(x, 0.0) if truncate else x
            x_new = x + model.drift(xe, tk) * dt + model.vol(xe, tk) * dw
            f_new = rate(x_new)
            acc[m] += 0.5 * dt * (f_prev[m] + f_new)
            f_prev[m] = f_new
            xs[m] = x_new
        if track_sup:
            for m in range(len(models)):
                np.maximum(sup[m], (xs[m] - xs[0]) ** 2, out=sup[m])
    for m in range(len(models)):
        if not (np.all(np.isfinite(xs[m])) and np.all(np.isfinite(acc[m]))):
            raise McError(f"non-finite path value for model {models[m].name!r}")
    return xs, acc, sup


def _ou_params(model: ShortRateModel):
    p = model.spec.get("params", {})
    theta = p["theta"]
    return float(p["k"]), PiecewiseLinear.of(theta), float(p["sigma"])


def _phi(k: float, tau: float) -> float:
    """(1 - exp(-k tau)) / k, continuous at k = 0."""
    s = k * tau
    if abs(s) < 1e-12:
        return tau
    return -math.expm1(-s) / k


def exact_ou_moments(k: float, theta, sigma: float, x0: float, t: float, T: float):
    """Mean vector and covariance of ``(X_T, int_t^T X ds)`` for OU dynamics.

    ``dX = k (theta_s - X) ds + sigma dB``; ``theta`` is a number or a
    ``PiecewiseLinear`` table in calendar time.
    """
    tau = T - t
    table = PiecewiseLinear.of(theta)
    e = math.exp(-k * tau)
    phi1 = _phi(k, tau)
    if len(table.knots) == 1:
        th = table.knots[0][1]
        m_x = th + (x0 - th) * e
        m_i = th * tau + (x0 - th) * phi1
    else:
        pts = [kt for kt, _ in table.knots if t < kt < T]
        wx, _ = integrate.quad(lambda s: table(s) * k * math.exp(-k * (T - s)), t, T, points=pts or None, limit=200, epsabs=1e-14, epsrel=1e-12)
        wi, _ = integrate.quad(lambda s: table(s) * -math.expm1(-k * (T - s)), t, T, points=pts or None, limit=200, epsabs=1e-14, epsrel=1e-12)
        m_x = x0 * e + wx
        m_i = x0 * phi1 + wi
    var_x = sigma**2 * _phi(2 * k, tau)
    cov = 0.5 * sigma**2 * phi1**2
    s = k * tau
    if abs(s) < 1e-4:
        var_i = sigma**2 * tau**3 * (1.0 / 3.0 - s / 4.0 + 7.0 * s * s / 60.0)
    else:
        var_i = sigma**2 / k**2 * (tau - 2.0 * phi1 + _phi(2 * k, tau))
    return np.array([m_x, m_i]), np.array([[var_x, cov], [cov, var_i]])


def _ou_draw(mean, covm, z2):
    # z2 has shape (2, n); lower Cholesky factor written out to allow rank 0
    vx, c, vi = covm[0, 0], covm[0, 1], covm[1, 1]
    l11 = math.sqrt(max(vx, 0.0))
    l21 = c / l11 if l11 > 0 else 0.0
    l22 = math.sqrt(max(vi - l21 * l21, 0.0))
    x_t = mean[0] + l11 * z2[0]
    integral = mean[1] + l21 * z2[0] + l22 * z2[1]
    return x_t, integral


def exact_ou_sample(model: ShortRateModel, x0: float, t: float, T: float, n: int, seed: int, antithetic: bool = False):
    """Draw ``n`` exact joint samples of ``(X_T, int_t^T X ds)`` for V or HW."""
    _check_scheme(model, "exact-ou")
    k, theta, sigma = _ou_params(model)
    mean, covm = exact_ou_moments(k, theta, sigma, x0, t, T)
    xs, ints = [], []
    for b, nb in _blocks(n):
        z = _block_normals(seed, b, (2, nb), antithetic)
        x_t, integral = _ou_draw(mean, covm, z)
        xs.append(x_t)
        ints.append(integral)
    return np.concatenate(xs), np.concatenate(ints)


# -- public pricing API ------------------------------------------------------


def _estimate_hash(models, payoff, x0, t, T, cfg, cap) -> str:
    return digest(
        {
            "models": [dict(m.spec) or {"name": m.name} for m in models],
            "payoff": dict(payoff.spec) or {"name": payoff.name},
            "x0": x0,
            "t": t,
            "T": T,
            "mc": cfg.to_dict(),
            "cap": None if cap is None else cap.to_dict(),
        }
    )


def _path_values(models, payoff, x0, t, T, cfg, cap, track_sup=False):
    """Per-path discounted payoffs for each model, in path order."""
    for m in models:
        _check_scheme(m, cfg.scheme)
    if not T > t:
        raise McError("need T > t")
    rate = apply_cap(cap)

    if cfg.scheme == "exact-ou":
        if cap is not None:
            raise McError("exact-ou sampling does not support a rate cap")
        moments = []
        for m in models:
            k, theta, sigma = _ou_params(m)
            moments.append(exact_ou_moments(k, theta, sigma, x0, t, T))

        def block(b, nb):
            z = _block_normals(cfg.seed, b, (2, nb), cfg.antithetic)
            out = []
            for mean, covm in moments:
                x_t, integral = _ou_draw(mean, covm, z)
                out.append(np.exp(-integral) * payoff(x_t))
            return out, None

    else:

        def block(b, nb):
            z = _block_normals(cfg.seed, b, (cfg.n_steps, nb), cfg.antithetic)
            xs, acc, sup = _simulate(models, x0, t, T, cfg.n_steps, z, cfg.scheme, rate, track_sup)
            return [np.exp(-a) * payoff(x) for x, a in zip(xs, acc)], sup

    results = _run_blocks(block, cfg)
    per_model = [np.concatenate([r[0][m] for r in results]) for m in range(len(models))]
    sups = None
    if track_sup:
        sups = [np.concatenate([r[1][m] for r in results]) for m in range(len(models))]
    blocks_n = [nb for _, nb in _blocks(cfg.n_paths)]
    return per_model, sups, blocks_n


def _estimate(values, blocks_n, cfg, chash) -> McEstimate:
    mean, se = _mean_stderr(_pair(values, blocks_n, cfg.antithetic))
    return McEstimate(mean, se, cfg.n_paths, cfg.n_steps, cfg.seed, cfg.scheme, chash)


def price(
    model: ShortRateModel,
    payoff: Payoff,
    x0: float,
    t: float,
    T: float,
    cfg: McConfig | None = None,
    rate_cap: RateCap | None = None,
) -> McEstimate:
    """Feynman-Kac estimate with a trapezoidal discount integral."""
    cfg = cfg or McConfig()
    (values,), _, blocks_n = _path_values([model], payoff, x0, t, T, cfg, rate_cap)
    return _estimate(values, blocks_n, cfg, _estimate_hash([model], payoff, x0, t, T, cfg, rate_cap))


def coupled_compare(
    model_a: ShortRateModel,
    model_b: ShortRateModel,
    payoff: Payoff,
    x0: float,
    t: float,
    T: float,
    cfg: McConfig | None = None,
) -> CoupledResult:
    """Price two models on identical Brownian increments.

    The paired difference ``U_a - U_b`` has its own (much smaller) stderr.
    """
    cfg = cfg or McConfig()
    (va, vb), _, blocks_n = _path_values([model_a, model_b], payoff, x0, t, T, cfg, None)
    chash = _estimate_hash([model_a, model_b], payoff, x0, t, T, cfg, None)
    est_a = _estimate(va, blocks_n, cfg, chash)
    est_b = _estimate(vb, blocks_n, cfg, chash)
    d = _pair(va, blocks_n, cfg.antithetic) - _pair(vb, blocks_n, cfg.antithetic)
    dm, dse = _mean_stderr(d)
    return CoupledResult(est_a, est_b, dm, dse)


def cir_mollified(k: float, theta: float, sigma: float, n: int) -> ShortRateModel:
    """CIR with volatility ``sigma sqrt(x+ + 1/n)``, which tends to CIR as n grows."""
    return custom(
        "k*(theta - max(x, 0))",
        "sigma*sqrt(max(x, 0) + eps)",
        "full",
        {"k": k, "theta": theta, "sigma": sigma, "eps": 1.0 / n},
        name=f"CIR_n{n}",
    )


def continuity_experiment(
    model: ShortRateModel,
    family: Callable[[int], ShortRateModel],
    ns: Sequence[int],
    payoff: Payoff,
    x0: float,
    t: float,
    T: float,
    cfg: McConfig | None = None,
) -> ContinuityResult:
    """Prices ``U_n`` for the approximating models ``family(n)`` under common random numbers.

    Also reports the empirical ``E[sup_s |X^n_s - X_s|^2]`` against ``model``.
    """
    cfg = cfg or McConfig(scheme="full-truncation-euler")
    if cfg.scheme == "exact-ou":
        raise McError("continuity experiments need a path scheme")
    approx = [family(n) for n in ns]
    models = [model, *approx]
    values, sups, blocks_n = _path_values(models, payoff, x0, t, T, cfg, None, track_sup=True)
    chash = _estimate_hash(models, payoff, x0, t, T, cfg, None)
    ests = [_estimate(v, blocks_n, cfg, chash) for v in values]
    moments = [_mean_stderr(s) for s in sups[1:]]
    return ContinuityResult(
        ns=tuple(ns),
        estimates=tuple(ests[1:]),
        reference=ests[0],
        sup_moments=tuple(m for m, _ in moments),
        sup_stderrs=tuple(s for _, s in moments),
    )
