"""Finite-difference solver for the term structure equation.

In time to maturity ``tau = T - t`` the price solves::

    U_tau = alpha U_xx + beta U_x - f(x) U,      U(x, 0) = g(x)

with ``f(x) = x`` (or a capped rate).  We use a theta-scheme on a uniform
grid with a few fully implicit start-up steps (Rannacher) and central
second differences.  The drift term is differenced centrally where the
cell Peclet number ``|beta| h / (2 alpha)`` is at most 1 and by a
second-order upwind stencil elsewhere (``"adaptive2"``); first-order
upwinding (``"adaptive"``, ``"upwind"``) and pure central differencing are
also available.  Systems are pentadiagonal and solved directly.
Outer boundaries carry the linearity condition ``U_xx = 0``; for half-line
models the row at ``x = 0`` is the degenerate transport equation
``U_tau = beta(0, t) U_x`` discretised with an inflow one-sided difference.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from ._canonical import digest
from .models import Domain, ModelError, Payoff, RateCap, ShortRateModel, apply_cap

__all__ = [
    "GridError",
    "SolverError",
    "SchemeDiagnostic",
    "Grid",
    "SolverConfig",
    "PriceSurface",
    "default_grid",
    "solve",
    "solve_halfline",
    "price_bond_option",
    "boundary_influence_probe",
    "fit_growth_constant",
    "report_slice",
    "PROBE_THRESHOLD",
    "DRIFT_SCHEMES",
]

PROBE_THRESHOLD = 1e-3
DRIFT_SCHEMES = ("central", "upwind", "adaptive", "adaptive2")


class GridError(ValueError):
    pass


class SolverError(ArithmeticError):
    pass


class SchemeDiagnostic(UserWarning):
    """The explicit part of the theta-scheme may be unstable for this step size."""


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if self.nx < 3:
            raise GridError(f"grid too small: nx={self.nx} (need nx >= 3)")
        if self.nt < 1:
            raise GridError(f"grid too small: nt={self.nt} (need nt >= 1)")
        if not self.x_min < self.x_max:
            raise GridError("grid needs x_min < x_max")
        if not self.T > 0:
            raise GridError("grid needs T > 0")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def tau(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dtau(self) -> float:
        return self.T / self.nt

    def coarsened(self) -> Optional["Grid"]:
        """Grid with doubled h and dtau sharing every other node, if one exists."""
        if self.nx % 2 == 0 or self.nt % 2 == 1 or self.nx < 5:
            return None
        return Grid(self.x_min, self.x_max, (self.nx + 1) // 2, self.T, self.nt // 2)

    def refined(self) -> "Grid":
        return Grid(self.x_min, self.x_max, 2 * self.nx - 1, self.T, 2 * self.nt)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "nx": self.nx, "T": self.T, "nt": self.nt}


@dataclass(frozen=True)
class SolverConfig:
    """Scheme parameters.

    ``drift_scheme`` is ``"central"``, ``"upwind"``, ``"adaptive"`` (first-order
    upwind only where the cell Peclet number ``|beta| h / (2 alpha)`` exceeds
    1) or ``"adaptive2"`` (second-order upwind there instead).
    ``boundary`` is ``"linear"`` (``U_xx = 0`` rows) or ``"value"``, in which
    case ``boundary_values = (lo, hi)`` gives callables of ``tau``.
    ``origin_order`` selects the one-sided drift difference at ``x = 0`` for
    half-line models.
    """

    theta: float = 0.5
    rannacher_steps: int = 2
    rate_cap: Optional[RateCap] = None
    boundary: str = "linear"
    drift_scheme: str = "adaptive2"
    boundary_values: Optional[tuple] = field(default=None, compare=False)
    estimate_error: bool = True
    origin_order: int = 2

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.rannacher_steps < 0:
            raise ValueError("rannacher_steps must be >= 0")
        if self.boundary not in ("linear", "value"):
            raise ValueError(f"unknown boundary condition {self.boundary!r}")
        if self.boundary == "value" and self.boundary_values is None:
            raise ValueError("boundary='value' needs boundary_values=(lo, hi)")
        if self.drift_scheme not in DRIFT_SCHEMES:
            raise ValueError(f"unknown drift scheme {self.drift_scheme!r}")
        if self.origin_order not in (1, 2):
            raise ValueError("origin_order must be 1 or 2")

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "rannacher_steps": self.rannacher_steps,
            "rate_cap": None if self.rate_cap is None else self.rate_cap.to_dict(),
            "boundary": self.boundary,
            "drift_scheme": self.drift_scheme,
            "origin_order": self.origin_order,
        }


@dataclass(frozen=True, eq=False)
class PriceSurface:
    """Prices ``values[i, j] = U(x_i, tau_j)``.

    ``error_scale[i, j]`` estimates ``|U_h - U| / h^2`` from a solve on the
    coarsened grid (zeros when no estimate was made); ``log_error_scale`` is
    the same for ``ln U`` (NaN where ``U <= 0``).
    """

    values: np.ndarray
    grid: Grid
    model_name: str
    solver_id: str
    config_hash: str
    maturity: float
    error_scale: np.ndarray
    log_error_scale: np.ndarray
    probe: Optional[float] = None
    inner: Optional["PriceSurface"] = None

    @classmethod
    def from_values(cls, values, grid: Grid, name: str = "array") -> "PriceSurface":
        """Wrap exact values (no discretization error) as a surface on ``grid``."""
        values = np.array(values, dtype=float, copy=True)
        if values.ndim == 1:
            values = np.repeat(values[:, None], grid.nt + 1, axis=1)
        if values.shape != (grid.nx, grid.nt + 1):
            raise GridError(f"values shape {values.shape} does not match grid {(grid.nx, grid.nt + 1)}")
        values.setflags(write=False)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_scale = np.where(values > 0, 0.0, np.nan)
        return cls(
            values=values,
            grid=grid,
            model_name=name,
            solver_id="exact",
            config_hash=digest({"values": values, "grid": grid.to_dict()}),
            maturity=grid.T,
            error_scale=np.zeros(values.shape),
            log_error_scale=log_scale,
        )

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def tau(self) -> np.ndarray:
        return self.grid.tau

    def at(self, x0: float, j: int = -1) -> float:
        """Value at ``x0`` in column ``j`` by monotone cubic interpolation."""
        return float(PchipInterpolator(self.x, self.values[:, j])(x0))

    def column_index(self, tau: float) -> int:
        j = int(round(tau / self.grid.dtau))
        if not math.isclose(self.grid.tau[j], tau, rel_tol=1e-9, abs_tol=1e-12):
            raise GridError(f"tau={tau} is not a grid node")
        return j

    def with_probe(self, probe: float) -> "PriceSurface":
        return replace(self, probe=probe)

    def to_csv(self) -> str:
        """Header row of tau values, first column x values, 17 significant digits."""
        lines = ["x," + ",".join(f"{t:.17g}" for t in self.tau)]
        for xi, row in zip(self.x, self.values):
            lines.append(f"{xi:.17g}," + ",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    def envelope(self) -> dict:
        return {
            "model": self.model_name,
            "solver": self.solver_id,
            "config_hash": self.config_hash,
            "grid": self.grid.to_dict(),
            "maturity": self.maturity,
            "probe": self.probe,
        }


def report_slice(nx: int, fraction: float = 0.05) -> slice:
    """Interior index range excluding ``fraction`` of nodes near each end."""
    m = max(1, int(math.ceil(fraction * nx)))
    return slice(m, nx - m)


def default_grid(
    model: ShortRateModel,
    x0: float,
    T: float,
    nx: int = 801,
    nt: int = 400,
    others: tuple = (),
) -> Grid:
    """Truncated grid ``x0 + 5 + 8 sigma(x0) sqrt(T) (1 + D T)`` wide on the right.

    Full-line grids are symmetric about ``x0``; half-line grids start at 0.
    ``others`` widens the grid to cover further models sharing it.
    """
    width = 0.0
    for m in (model, *others):
        s0 = abs(float(m.vol(np.array(x0), 0.0)))
        width = max(width, 5.0 + 8.0 * s0 * math.sqrt(T) * (1.0 + m.growth_constant * T))
    x_max = x0 + width
    half = all(m.domain is Domain.HALF for m in (model, *others))
    x_min = 0.0 if half else x0 - width
    return Grid(x_min, x_max, nx, T, nt)


# -- core stepping -----------------------------------------------------------


def _operator(model, grid: Grid, t: float, rate, scheme: str, halfline: bool, origin_order: int = 2):
    """Banded spatial operator: ``coef[k + 2, i]`` multiplies ``U[i + k]``."""
    x = grid.x
    n = x.size
    h = grid.h
    alpha = np.asarray(model.alpha(x, t), dtype=float)
    beta = np.asarray(model.drift(x, t), dtype=float)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise SolverError(f"non-finite coefficients at t={t:g}")
    f = np.asarray(rate(x), dtype=float)
    diff = alpha / (h * h)
    if scheme == "central":
        up = np.zeros(n, dtype=bool)
    elif scheme == "upwind":
        up = np.ones(n, dtype=bool)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.abs(beta) * h > 2.0 * alpha
    coef = np.zeros((5, n))
    coef[1] = diff
    coef[2] = -2 * diff - f
    coef[3] = diff
    i = np.arange(n)
    # second-order upwind needs two upstream neighbours inside the grid
    second = up & (scheme == "adaptive2") & np.where(beta > 0, i + 2 <= n - 1, i - 2 >= 0)
    first = up & ~second
    central = ~up
    bp = np.maximum(beta, 0.0) / h
    bm = np.maximum(-beta, 0.0) / h
    coef[1] += np.where(central, -beta / (2 * h), 0.0) + np.where(first, bm, 0.0)
    coef[3] += np.where(central, beta / (2 * h), 0.0) + np.where(first, bp, 0.0)
    coef[2] -= np.where(first, bp + bm, 0.0)
    # (-3 U_i + 4 U_{i+1} - U_{i+2}) / 2h for beta > 0, mirrored for beta < 0
    coef[2] -= np.where(second, 1.5 * (bp + bm), 0.0)
    coef[3] += np.where(second, 2.0 * bp, 0.0)
    coef[4] -= np.where(second, 0.5 * bp, 0.0)
    coef[1] += np.where(second, 2.0 * bm, 0.0)
    coef[0] -= np.where(second, 0.5 * bm, 0.0)
    if halfline:
        # degenerate row at x = 0: U_tau = beta(0) U_x - f(0) U_0 with an
        # inflow one-sided U_x, first order (U_1 - U_0)/h or second order
        # (-3 U_0 + 4 U_1 - U_2)/(2h)
        b0 = max(beta[0], 0.0)
        coef[:, 0] = 0.0
        if origin_order == 1:
            coef[3, 0] = b0 / h
            coef[2, 0] = -b0 / h - f[0]
        else:
            coef[4, 0] = -0.5 * b0 / h
            coef[3, 0] = 2.0 * b0 / h
            coef[2, 0] = -1.5 * b0 / h - f[0]
    return coef


def _apply(coef, u):
    n = u.size
    out = coef[2] * u
    for k in (-2, -1, 1, 2):
        if k < 0:
            out[-k:] += coef[k + 2, -k:] * u[: n + k]
        else:
            out[: n - k] += coef[k + 2, : n - k] * u[k:]
    return out


def _march(model, g_values, grid: Grid, config: SolverConfig, maturity: float, halfline: bool):
    n = grid.nx
    dt = grid.dtau
    rate = apply_cap(config.rate_cap)
    linear = config.boundary == "linear"
    lo_node = 0 if halfline else 1
    hi_node = n - 2
    m = hi_node - lo_node + 1

    u = np.array(g_values, dtype=float)
    out = np.empty((n, grid.nt + 1))
    out[:, 0] = u
    cache = {}

    def op(t):
        if not model.time_dependent:
            t = 0.0
        if t not in cache:
            if len(cache) > 4:
                cache.clear()
            cache[t] = _operator(model, grid, t, rate, config.drift_scheme, halfline, config.origin_order)
        return cache[t]

    def boundary_values(tau):
        if linear:
            return None
        lo_fn, hi_fn = config.boundary_values
        return float(lo_fn(tau)), float(hi_fn(tau))

    if not linear:
        bv = boundary_values(0.0)
        if not halfline:
            u[0] = bv[0]
        u[-1] = bv[1]

    rows = np.arange(lo_node, hi_node + 1)
    warned = False
    for step in range(grid.nt):
        theta = 1.0 if step < config.rannacher_steps else config.theta
        tau0, tau1 = grid.tau[step], grid.tau[step + 1]
        c0 = op(maturity - tau0)
        c1 = op(maturity - tau1)

        if theta < 0.5 and not warned and (1 - 2 * theta) * dt * float(np.max(np.abs(c0[2]))) > 2.0:
            warnings.warn(
                f"explicit part dominates (theta={theta:g}, dtau={dt:g}); scheme may be unstable",
                SchemeDiagnostic,
                stacklevel=3,
            )
            warned = True

        rhs = u[rows] + (1 - theta) * dt * _apply(c0, u)[rows]

        # implicit matrix on all nodes, then boundary nodes are eliminated:
        # M[r, k] is the coefficient of U[rows[r] + k - 2]
        M = -theta * dt * c1[:, rows].T.copy()
        M[:, 2] += 1.0
        bv = None if linear else boundary_values(tau1)
        for r in sorted({0, 1, m - 2, m - 1}):
            i = rows[r]
            for k in range(5):
                j = i + k - 2
                if M[r, k] == 0.0 or lo_node <= j <= hi_node:
                    continue
                coef, M[r, k] = M[r, k], 0.0
                if j < 0 or j > n - 1:
                    raise SolverError("stencil leaves the grid")
                if linear:
                    # U_0 = 2 U_1 - U_2 and U_{n-1} = 2 U_{n-2} - U_{n-3}
                    a, b = (1, 2) if j == 0 else (n - 2, n - 3)
                    M[r, a - i + 2] += 2 * coef
                    M[r, b - i + 2] -= coef
                else:
                    rhs[r] -= coef * (bv[0] if j == 0 else bv[1])

        ab = np.zeros((5, m))
        for k in range(5):
            off = k - 2
            # banded storage: ab[2 - off, r + off] = M[r, k]
            if off >= 0:
                ab[2 - off, off:] = M[: m - off, k]
            else:
                ab[2 - off, : m + off] = M[-off:, k]
        inner = solve_banded((2, 2), ab, rhs, check_finite=False)

        u = u.copy()
        u[rows] = inner
        if linear:
            if not halfline:
                u[0] = 2 * u[1] - u[2]
            u[-1] = 2 * u[-2] - u[-3]
        else:
            if not halfline:
                u[0] = bv[0]
            u[-1] = bv[1]
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite value at time step {step + 1} (tau={tau1:g})")
        out[:, step + 1] = u
    return out


def _error_scales(values, grid: Grid, coarse_values):
    """Pointwise ``|U_h - U_2h| / (3 h^2)`` spread to all fine nodes."""
    h2 = grid.h**2
    diff = np.full(values.shape, np.nan)
    diff[::2, ::2] = np.abs(values[::2, ::2] - coarse_values)
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.where(values > 0, np.log(np.where(values > 0, values, 1.0)), np.nan)
        lc = np.where(coarse_values > 0, np.log(np.where(coarse_values > 0, coarse_values, 1.0)), np.nan)
    ldiff = np.full(values.shape, np.nan)
    ldiff[::2, ::2] = np.abs(lv[::2, ::2] - lc)

    def spread(d):
        # fill odd rows/columns with the max of their even neighbours
        d[1::2, ::2] = np.fmax(d[0:-1:2, ::2], d[2::2, ::2])
        d[:, 1::2] = np.fmax(d[:, 0:-1:2], d[:, 2::2])
        return d / (3.0 * h2)

    scale = spread(diff)
    log_scale = spread(ldiff)
    log_scale[~(values > 0)] = np.nan
    return np.nan_to_num(scale, nan=0.0), log_scale


def _surface_hash(model, payoff, grid, config, maturity) -> str:
    return digest(
        {
            "model": dict(model.spec) or {"name": model.name},
            "payoff": dict(payoff.spec) or {"name": payoff.name},
            "grid": grid.to_dict(),
            "solver": config.to_dict(),
            "maturity": maturity,
        }
    )


def _run(model, payoff, grid, config, maturity, halfline, solver_id):
    x = grid.x
    model.check_growth(x, np.unique([maturity - grid.T, maturity]))
    g = payoff(x)
    if not np.all(np.isfinite(g)):
        raise SolverError("payoff is not finite on the grid")
    # overflow is reported as a SolverError by the non-finite check
    with np.errstate(over="ignore", invalid="ignore"):
        values = _march(model, g, grid, config, maturity, halfline)

    coarse = grid.coarsened() if config.estimate_error else None
    if coarse is not None:
        cvals = _march(model, payoff(coarse.x), coarse, config, maturity, halfline)
        scale, log_scale = _error_scales(values, grid, cvals)
    else:
        scale = np.zeros(values.shape)
        log_scale = np.where(values > 0, 0.0, np.nan)
    values.setflags(write=False)
    return PriceSurface(
        values=values,
        grid=grid,
        model_name=model.name,
        solver_id=solver_id,
        config_hash=_surface_hash(model, payoff, grid, config, maturity),
        maturity=maturity,
        error_scale=scale,
        log_error_scale=log_scale,
    )


def solve(
    model: ShortRateModel,
    payoff: Payoff,
    grid: Grid,
    config: SolverConfig | None = None,
    maturity: float | None = None,
) -> PriceSurface:
    """Price ``payoff`` on ``grid`` for all times to maturity up to ``grid.T``.

    ``maturity`` is the calendar time at ``tau = 0`` (defaults to ``grid.T``);
    it only matters for time-dependent models.  Half-line models are routed
    to :func:`solve_halfline`.
    """
    config = config or SolverConfig()
    maturity = grid.T if maturity is None else maturity
    if model.domain is Domain.HALF:
        return solve_halfline(model, payoff, grid, config, maturity)
    return _run(model, payoff, grid, config, maturity, False, f"theta{config.theta:g}-{config.drift_scheme}")


def solve_halfline(
    model: ShortRateModel,
    payoff: Payoff,
    grid: Grid,
    config: SolverConfig | None = None,
    maturity: float | None = None,
) -> PriceSurface:
    """Solve a degenerate half-line model on ``[0, x_max]``.

    Needs ``alpha(0, t) = 0`` and ``beta(0, t) >= 0``; no boundary value is
    imposed at ``x = 0``.
    """
    config = config or SolverConfig()
    maturity = grid.T if maturity is None else maturity
    if grid.x_min != 0.0:
        raise GridError("half-line models need x_min = 0")
    ts = np.linspace(maturity - grid.T, maturity, 11) if model.time_dependent else [0.0]
    for t in ts:
        a0 = float(model.alpha(np.array(0.0), float(t)))
        b0 = float(model.drift(np.array(0.0), float(t)))
        if a0 != 0.0 or b0 < 0.0:
            raise ModelError(
                f"{model.name}: half-line solve needs alpha(0,t)=0 and beta(0,t)>=0 "
                f"(alpha={a0:g}, beta={b0:g} at t={t:g})"
            )
    return _run(model, payoff, grid, config, maturity, True, f"halfline-theta{config.theta:g}-{config.drift_scheme}")


def price_bond_option(
    model: ShortRateModel,
    strike: float,
    T1: float,
    T2: float,
    grid: Grid,
    config: SolverConfig | None = None,
    inner_nt: int | None = None,
) -> PriceSurface:
    """European call with expiry ``T1`` on the ``T2``-bond.

    ``grid`` is the outer grid on ``[0, T1]`` (``grid.T`` must equal ``T1``).
    The inner bond surface shares its x-nodes; the outer payoff
    ``(u_inner - K)^+`` is carried by monotone cubic interpolation.
    """
    config = config or SolverConfig()
    if not (T2 > T1 > 0):
        raise GridError(f"need T2 > T1 > 0, got T1={T1}, T2={T2}")
    if strike < 0:
        raise GridError("strike must be non-negative")
    if not math.isclose(grid.T, T1):
        raise GridError(f"outer grid must span [0, T1]; got T={grid.T}, T1={T1}")
    if inner_nt is None:
        inner_nt = max(2, int(math.ceil(grid.nt * (T2 - T1) / T1)))
        inner_nt += inner_nt % 2
    inner_grid = Grid(grid.x_min, grid.x_max, grid.nx, T2 - T1, inner_nt)
    inner = solve(model, Payoff.bond(), inner_grid, config, maturity=T2)

    bond_at_T1 = inner.values[:, -1]
    interp = PchipInterpolator(inner.x, bond_at_T1, extrapolate=False)
    x_lo, x_hi = inner.x[0], inner.x[-1]

    def g(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < x_lo - 1e-12) or np.any(x > x_hi + 1e-12):
            raise GridError("outer grid extends beyond the inner bond grid")
        return np.maximum(interp(np.clip(x, x_lo, x_hi)) - strike, 0.0)

    m = float(np.max(bond_at_T1))
    payoff = Payoff(
        g=g,
        name=f"call(K={strike:g},T1={T1:g},T2={T2:g})",
        convex=True,
        decreasing=True,
        growth=(m, 0.0),
        spec={"type": "bond_call", "strike": strike, "T1": T1, "T2": T2, "inner": inner.config_hash},
    )
    outer = solve(model, payoff, grid, config, maturity=T1)
    return replace(outer, inner=inner, solver_id=outer.solver_id + "+nested")


def boundary_influence_probe(
    model: ShortRateModel,
    payoff: Payoff,
    grid: Grid,
    config: SolverConfig | None = None,
    region: tuple[float, float] | None = None,
    maturity: float | None = None,
) -> float:
    """Max relative change on ``region`` when the truncated domain is widened.

    Each free end moves outward by half the half-width (a whole number of
    cells, so nodes coincide); x_min stays at 0 for half-line models.
    """
    config = replace(config or SolverConfig(), estimate_error=False)
    base = solve(model, payoff, grid, config, maturity)
    half_width = 0.5 * (grid.x_max - grid.x_min)
    cells = int(math.ceil(0.5 * half_width / grid.h))
    ext = cells * grid.h
    left = 0 if model.domain is Domain.HALF else cells
    wide = Grid(grid.x_min - (ext if left else 0.0), grid.x_max + ext, grid.nx + cells + left, grid.T, grid.nt)
    other = solve(model, payoff, wide, config, maturity)
    if region is None:
        sl = report_slice(grid.nx)
        mask = np.zeros(grid.nx, dtype=bool)
        mask[sl] = True
    else:
        mask = (grid.x >= region[0] - 1e-12) & (grid.x <= region[1] + 1e-12)
    a = base.values[mask]
    b = other.values[left : left + grid.nx][mask]
    denom = np.maximum(np.abs(a), 1e-300)
    return float(np.max(np.abs(a - b) / denom))


def fit_growth_constant(surface: PriceSurface, j: int | None = None) -> float:
    """Smallest M with ``U <= M max(1, exp(-M x))`` over the grid (or column j)."""
    x = surface.x
    vals = surface.values if j is None else surface.values[:, [j]]
    u = np.max(vals, axis=1)

    def ok(m):
        return bool(np.all(u <= m * np.maximum(1.0, np.exp(np.minimum(-m * x, 700.0))) * (1 + 1e-12)))

    lo, hi = 0.0, max(1.0, float(np.max(u)))
    while not ok(hi):
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * hi:
            break
    return hi

