"""Affine term structure: bond prices ``exp(-A(tau) - B(tau) x)``.

For drift ``beta = a(t) - b(t) x`` and ``alpha = (c(t) + d(t) x)/2`` the
substitution into the term structure equation gives the Riccati system::

    B' = 1 - b B - d B^2 / 2,      A' = a B - c B^2 / 2,      A(0) = B(0) = 0

in time to maturity ``tau``, with coefficients evaluated at calendar time
``t = maturity - tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

__all__ = ["AffineParams", "RiccatiSolution", "RiccatiBlowUp", "riccati_bond", "affine_duration", "bond_price"]

Coef = Union[float, Callable[[float], float]]

BLOW_UP = 1e6


class RiccatiBlowUp(ArithmeticError):
    pass


def _as_fn(c: Coef) -> Callable[[float], float]:
    if callable(c):
        return c
    value = float(c)
    return lambda t: value


@dataclass(frozen=True)
class AffineParams:
    """Drift ``a(t) - b(t) x`` and ``alpha = (c(t) + d(t) x) / 2``."""

    a: Coef = 0.0
    b: Coef = 0.0
    c: Coef = 0.0
    d: Coef = 0.0

    def coefficients(self, t: float) -> tuple[float, float, float, float]:
        return tuple(float(_as_fn(v)(t)) for v in (self.a, self.b, self.c, self.d))


@dataclass(frozen=True)
class RiccatiSolution:
    tau: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def bond(self, x, index: int = -1):
        """Bond price at the ``index``-th tau node."""
        return np.exp(-self.A[index] - self.B[index] * np.asarray(x, dtype=float))

    def surface(self, x) -> np.ndarray:
        """Prices on ``x`` (rows) times every tau node (columns)."""
        x = np.asarray(x, dtype=float)
        return np.exp(-self.A[None, :] - self.B[None, :] * x[:, None])


def _rhs(params: AffineParams, t: float, A: float, B: float):
    a, b, c, d = params.coefficients(t)
    return a * B - 0.5 * c * B * B, 1.0 - b * B - 0.5 * d * B * B


def riccati_bond(params: AffineParams, tau_max: float, n_steps: int, maturity: float | None = None) -> RiccatiSolution:
    """Integrate the Riccati system on ``[0, tau_max]`` with classical RK4."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if tau_max < 0:
        raise ValueError("tau_max must be non-negative")
    maturity = tau_max if maturity is None else maturity
    h = tau_max / n_steps
    tau = np.linspace(0.0, tau_max, n_steps + 1)
    A = np.zeros(n_steps + 1)
    B = np.zeros(n_steps + 1)
    a_n, b_n = 0.0, 0.0
    for n in range(n_steps):
        t0 = maturity - tau[n]
        k1 = _rhs(params, t0, a_n, b_n)
        k2 = _rhs(params, t0 - h / 2, a_n + h / 2 * k1[0], b_n + h / 2 * k1[1])
        k3 = _rhs(params, t0 - h / 2, a_n + h / 2 * k2[0], b_n + h / 2 * k2[1])
        k4 = _rhs(params, t0 - h, a_n + h * k3[0], b_n + h * k3[1])
        a_n += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b_n += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not np.isfinite(b_n) or abs(b_n) > BLOW_UP:
            raise RiccatiBlowUp(f"B exceeded {BLOW_UP:g} at tau={tau[n + 1]:g}")
        A[n + 1] = a_n
        B[n + 1] = b_n
    return RiccatiSolution(tau, A, B)


def _steps_for(tau: float, per_year: int = 2000) -> int:
    return max(1, int(np.ceil(per_year * tau)))


def bond_price(params: AffineParams, x, tau: float, maturity: float | None = None, n_steps: int | None = None):
    """Bond price at time to maturity ``tau`` for short rate(s) ``x``."""
    if tau == 0:
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0
    sol = riccati_bond(params, tau, n_steps or _steps_for(tau), maturity)
    out = sol.bond(x)
    return float(out) if np.ndim(out) == 0 else out


def affine_duration(params: AffineParams, tau: float, maturity: float | None = None, n_steps: int | None = None) -> float:
    """Duration ``-d/dx ln u`` of an affine bond, which equals ``B(tau)``."""
    if tau == 0:
        return 0.0
    return float(riccati_bond(params, tau, n_steps or _steps_for(tau), maturity).B[-1])
