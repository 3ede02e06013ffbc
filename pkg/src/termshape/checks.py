"""Numerical verdicts for shape properties of computed price surfaces.

Every check compares a finite-difference quantity against a per-node
allowance ``atol + c h^2 E`` where ``E`` is the surface's estimated
discretization error constant (from a solve on the coarsened grid), taken
as the maximum over a small window of neighbouring nodes.  Exact surfaces
carry ``E = 0`` and are checked against ``atol`` alone.  Only the report
region (the grid minus 5% of nodes at each end) is inspected, since the
linearity boundary rows bias second differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import maximum_filter1d

from .models import Domain, Payoff, RateCap, ShortRateModel
from .pde import Grid, PriceSurface, SolverConfig, report_slice, solve

__all__ = [
    "CheckError",
    "CheckReport",
    "C_FACTOR",
    "ATOL_FACTOR",
    "convexity_check",
    "log_curvature_check",
    "monotonicity_x_check",
    "dominance_check",
    "duration",
    "bump_model",
    "necessity_counterexample",
    "first_violation",
    "CapConvergence",
    "cap_convergence",
]

C_FACTOR = 10.0
ATOL_FACTOR = 1e-10
WINDOW = 5


class CheckError(ValueError):
    pass


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one property check.

    ``violation`` is the size of the offending quantity at the worst node
    (0 when it has the favourable sign); ``x``/``tau`` locate that node and
    ``atol + h2_allowance`` is the tolerance applied there.
    """

    property: str
    verdict: str
    violation: float
    x: float
    tau: float
    atol: float
    h2_allowance: float
    surface_hash: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def tolerance(self) -> float:
        return self.atol + self.h2_allowance

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict,
            "violation": self.violation,
            "x": self.x,
            "tau": self.tau,
            "atol": self.atol,
            "h2_allowance": self.h2_allowance,
            "surface_hash": self.surface_hash,
        }


def _rows(surface: PriceSurface) -> slice:
    if surface.grid.nx < 3:
        raise CheckError(f"grid too small: nx={surface.grid.nx}")
    return report_slice(surface.grid.nx)


def _window(scale: np.ndarray) -> np.ndarray:
    scale = np.nan_to_num(scale, nan=0.0)
    return maximum_filter1d(scale, size=WINDOW, axis=0, mode="nearest")


def _verdict(name, score, allowance, atol, x, tau, surface_hash) -> CheckReport:
    """Worst node of ``score - allowance``; ``score > 0`` means the wrong sign.

    ``x`` and ``tau`` index the rows and columns of ``score``.  Ties go to
    the first node in (x, tau) index order.
    """
    excess = score - allowance
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    passed = bool(excess[i, j] <= 0)
    return CheckReport(
        property=name,
        verdict="pass" if passed else "fail",
        violation=float(max(score[i, j], 0.0)),
        x=float(x[i]),
        tau=float(tau[j]),
        atol=float(atol),
        h2_allowance=float(allowance[i, j] - atol),
        surface_hash=surface_hash,
    )


def _second_difference(v: np.ndarray, rows: slice) -> np.ndarray:
    i = np.arange(v.shape[0])[rows]
    return v[i - 1] + v[i + 1] - 2.0 * v[i]


def convexity_check(surface: PriceSurface, c: float = C_FACTOR) -> CheckReport:
    """Second differences in x must be non-negative up to the allowance."""
    rows = _rows(surface)
    u = surface.values
    atol = ATOL_FACTOR * float(np.max(np.abs(u)))
    d2 = _second_difference(u, rows)
    allowance = atol + c * surface.grid.h**2 * _window(surface.error_scale)[rows]
    return _verdict("convexity", -d2, allowance, atol, surface.x[rows], surface.tau, surface.config_hash)


def _log_values(surface: PriceSurface, rows: slice) -> np.ndarray:
    u = surface.values[rows]
    if np.any(~(u > 0)):
        i, j = np.argwhere(~(u > 0))[0]
        raise CheckError(
            f"non-positive value {u[i, j]:g} at x={surface.x[rows][i]:g}, tau={surface.tau[j]:g}"
        )
    return np.log(u)


def log_curvature_check(surface: PriceSurface, mode: str = "convex", c: float = C_FACTOR) -> CheckReport:
    """Sign of the second differences of ``ln u``; ``mode`` is convex or concave."""
    if mode not in ("convex", "concave"):
        raise CheckError(f"mode must be 'convex' or 'concave', got {mode!r}")
    rows = _rows(surface)
    wide = slice(rows.start - 1, rows.stop + 1)
    lu = np.empty_like(surface.values)
    lu[wide] = _log_values(surface, wide)
    d2 = _second_difference(lu, rows)
    atol = ATOL_FACTOR * max(1.0, float(np.max(np.abs(lu[wide]))))
    allowance = atol + c * surface.grid.h**2 * _window(surface.log_error_scale)[rows]
    score = -d2 if mode == "convex" else d2
    return _verdict(f"log-{mode}", score, allowance, atol, surface.x[rows], surface.tau, surface.config_hash)


def monotonicity_x_check(surface: PriceSurface, direction: str = "decreasing", c: float = C_FACTOR) -> CheckReport:
    """``u[i+1, j] <= u[i, j] + tol`` across the report region (ties allowed)."""
    if direction not in ("decreasing", "increasing"):
        raise CheckError(f"unknown direction {direction!r}")
    rows = _rows(surface)
    u = surface.values
    i = np.arange(u.shape[0])[rows]
    i = i[i + 1 < u.shape[0]]
    step = u[i + 1] - u[i]
    atol = ATOL_FACTOR * float(np.max(np.abs(u)))
    allowance = atol + c * surface.grid.h**2 * _window(surface.error_scale)[i]
    score = step if direction == "decreasing" else -step
    return _verdict(f"monotone-{direction}", score, allowance, atol, surface.x[i], surface.tau, surface.config_hash)


def dominance_check(surface_hi: PriceSurface, surface_lo: PriceSurface, c: float = C_FACTOR) -> CheckReport:
    """``surface_hi >= surface_lo - tol`` pointwise on the report region."""
    if surface_hi.grid != surface_lo.grid:
        raise CheckError(f"grid mismatch: {surface_hi.grid.to_dict()} vs {surface_lo.grid.to_dict()}")
    if not math.isclose(surface_hi.maturity, surface_lo.maturity):
        raise CheckError("grid mismatch: surfaces have different maturities")
    rows = _rows(surface_hi)
    hi = surface_hi.values[rows]
    lo = surface_lo.values[rows]
    atol = ATOL_FACTOR * max(float(np.max(np.abs(hi))), float(np.max(np.abs(lo))))
    scale = _window(surface_hi.error_scale) + _window(surface_lo.error_scale)
    allowance = atol + c * surface_hi.grid.h**2 * scale[rows]
    return _verdict(
        "dominance",
        lo - hi,
        allowance,
        atol,
        surface_hi.x[rows],
        surface_hi.tau,
        f"{surface_hi.config_hash},{surface_lo.config_hash}",
    )


def duration(surface: PriceSurface) -> np.ndarray:
    """``-d/dx ln u`` by central differences (second-order one-sided at the ends).

    The surface must be strictly positive on the report region and its
    neighbouring rows; rows near the truncation boundary where ``u <= 0``
    give NaN.
    """
    u = surface.values
    rows = _rows(surface)
    if np.any(~(u[rows.start - 1 : rows.stop + 1] > 0)):
        raise CheckError("duration needs a strictly positive surface on the report region")
    with np.errstate(divide="ignore", invalid="ignore"):
        ln_u = np.log(np.where(u > 0, u, np.nan))
    return -np.gradient(ln_u, surface.grid.h, axis=0, edge_order=2)


# -- necessity of beta_xx <= 2 ------------------------------------------------


def _bump(s):
    """``w(s) = exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero outside; ``w(0)=1``, ``w''(0)=-2``."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    w = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    w1 = w * (-2.0 * s / q**2)
    w2 = w * ((2.0 * s / q**2) ** 2 - 2.0 / q**2 - 8.0 * s * s / q**3)
    return w, w1, w2


def bump_model(x0: float = 0.0, curvature: float = 4.0, sigma: float = 0.05, radius: float = 0.5) -> ShortRateModel:
    """Constant volatility and a compact drift bump with ``beta_xx(x0) = curvature``."""
    if not sigma > 0:
        raise CheckError("the construction needs sigma > 0")
    if not radius > 0:
        raise CheckError("the construction needs radius > 0")
    amp = -0.5 * curvature * radius**2  # divides by w''(0) = -2

    def drift(x, t):
        return amp * _bump((np.asarray(x, dtype=float) - x0) / radius)[0]

    def drift_x(x, t):
        return amp / radius * _bump((np.asarray(x, dtype=float) - x0) / radius)[1]

    def drift_xx(x, t):
        return amp / radius**2 * _bump((np.asarray(x, dtype=float) - x0) / radius)[2]

    def vol(x, t):
        return np.full(np.shape(x), float(sigma))

    zeros = lambda x, t: np.zeros(np.shape(x))  # noqa: E731
    # |beta| <= |amp| e^0 and sigma is constant
    growth = max(1.1 * max(abs(amp), sigma), 1e-8)
    return ShortRateModel(
        name="bump",
        domain=Domain.FULL,
        drift=drift,
        vol=vol,
        growth_constant=growth,
        drift_x=drift_x,
        drift_xx=drift_xx,
        alpha_x=zeros,
        alpha_xx=zeros,
        spec={
            "type": "bump",
            "params": {"x0": x0, "curvature": curvature, "sigma": sigma, "radius": radius},
        },
    )


def necessity_counterexample(
    x0: float = 0.0,
    curvature: float = 4.0,
    flat_payoff: bool = False,
    sigma: float = 0.05,
    radius: float = 0.5,
    tau_max: float = 0.5,
    nx: int = 801,
    nt: int = 800,
    window: tuple[float, float] | None = None,
    c: float = C_FACTOR,
) -> CheckReport:
    """Search for a convexity violation under a drift with ``beta_xx(x0) > 2``.

    The payoff is a softplus put, strictly decreasing with slope -1 at ``x0``
    (strike ``x0 + 1``) or essentially flat there (strike ``x0 - 1``) when
    ``flat_payoff``.  Returns a report for the first ``tau`` whose column has
    a second difference below ``-(atol + c h^2 E)`` inside ``window``; the
    verdict is ``pass`` when such a ``tau`` exists, i.e. when the
    counterexample is confirmed.
    """
    model = bump_model(x0, curvature, sigma, radius)
    payoff = Payoff.softplus_put(x0 - 1.0 if flat_payoff else x0 + 1.0, 0.1)
    half = 4.0
    grid = Grid(x0 - half, x0 + half, nx, tau_max, nt)
    surface = solve(model, payoff, grid, SolverConfig())
    report = first_violation(surface, c, window)
    name = "necessity-flat" if flat_payoff else "necessity"
    return CheckReport(
        property=name,
        verdict="pass" if report is not None else "fail",
        violation=report[0] if report else 0.0,
        x=report[1] if report else float(x0),
        tau=report[2] if report else float(tau_max),
        atol=report[3] if report else ATOL_FACTOR * float(np.max(np.abs(surface.values))),
        h2_allowance=report[4] if report else 0.0,
        surface_hash=surface.config_hash,
    )


def first_violation(surface: PriceSurface, c: float = C_FACTOR, window=None):
    """First column (in tau order) with a convexity violation, or None.

    Returns ``(violation, x, tau, atol, h2_allowance)`` for the worst node of
    that column.
    """
    rows = _rows(surface)
    x = surface.x[rows]
    u = surface.values
    atol = ATOL_FACTOR * float(np.max(np.abs(u)))
    d2 = _second_difference(u, rows)
    allowance = atol + c * surface.grid.h**2 * _window(surface.error_scale)[rows]
    mask = np.ones(x.shape, dtype=bool)
    if window is not None:
        mask = (x >= window[0]) & (x <= window[1])
    excess = np.where(mask[:, None], -d2 - allowance, -np.inf)
    bad = np.any(excess > 0, axis=0)
    if not np.any(bad):
        return None
    j = int(np.argmax(bad))
    i = int(np.argmax(excess[:, j]))
    return (float(-d2[i, j]), float(x[i]), float(surface.tau[j]), atol, float(allowance[i, j] - atol))


# -- rate-cap monotone convergence --------------------------------------------


@dataclass(frozen=True)
class CapConvergence:
    """Capped prices for increasing cap levels against the uncapped price.

    ``gaps[k]`` is the largest ``V^{K_k} - V`` on the region and
    ``max_increase`` the largest pointwise rise of ``V^{K}`` from one level
    to the next (non-positive when prices decrease as the cap is raised,
    up to ``rounding``).
    """

    levels: tuple
    gaps: tuple
    max_increase: float
    rounding: float
    region: tuple
    surface_hash: str

    @property
    def monotone(self) -> bool:
        return self.max_increase <= self.rounding

    def to_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "gaps": list(self.gaps),
            "max_increase": self.max_increase,
            "monotone": self.monotone,
            "rounding": self.rounding,
            "region": list(self.region),
            "surface_hash": self.surface_hash,
        }


def cap_convergence(
    model: ShortRateModel,
    payoff: Payoff,
    grid: Grid,
    levels=(1.0, 2.0, 4.0, 8.0),
    width: float = 1.0,
    region: tuple[float, float] | None = None,
    config: SolverConfig | None = None,
) -> CapConvergence:
    """Solve with each cap level and with no cap on a shared grid."""
    config = replace(config or SolverConfig(), estimate_error=False)
    x = grid.x
    if region is None:
        mask = np.zeros(grid.nx, dtype=bool)
        mask[report_slice(grid.nx)] = True
    else:
        mask = (x >= region[0] - 1e-12) & (x <= region[1] + 1e-12)
    base = solve(model, payoff, grid, config)
    capped = [solve(model, payoff, grid, replace(config, rate_cap=RateCap(float(k), width))) for k in levels]
    gaps = tuple(float(np.max(s.values[mask] - base.values[mask])) for s in capped)
    rises = [float(np.max(b.values[mask] - a.values[mask])) for a, b in zip(capped, capped[1:])]
    return CapConvergence(
        levels=tuple(float(k) for k in levels),
        gaps=gaps,
        max_increase=max(rises) if rises else 0.0,
        rounding=64 * float(np.finfo(float).eps) * float(np.max(np.abs(base.values))),
        region=(float(x[mask][0]), float(x[mask][-1])),
        surface_hash=base.config_hash,
    )
