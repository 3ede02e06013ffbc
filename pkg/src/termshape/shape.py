"""Coefficient-level sufficient conditions for shape preservation.

For each model we test, pointwise on a dense (x, t) grid:

* C   -- convexity preservation: ``beta_xx <= 2``;
* LCV -- log-convex bond prices: ``alpha`` convex and ``beta`` concave;
* LCC -- log-concave bond prices: either ``alpha`` constant in x with
  ``beta`` convex (full line), or ``alpha(0,t) = 0``, ``beta(0,t) >= 0``,
  ``alpha`` concave and ``beta`` convex (half line);
* affine -- ``alpha`` and ``beta`` both linear in x.

A failed condition means only that the sufficient condition fails, not
that the property itself is disproved.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .expr import central_difference, default_step
from .models import DEFAULT_PARAMS, REGISTRY_NAMES, Domain, ShortRateModel, registry

__all__ = [
    "Region",
    "Verdict",
    "ShapeReport",
    "TABLE2",
    "default_region",
    "check_convexity_condition",
    "check_lcv_condition",
    "check_lcc_condition",
    "check_affine",
    "classify",
    "table2_report",
    "matches_table2",
    "reports_to_csv",
    "REPORT_SCHEMA",
]

# (C, LCV, LCC) per model
TABLE2 = {
    "V": (True, True, True),
    "CIR": (True, True, True),
    "D": (True, True, False),
    "EV": (True, True, False),
    "HW": (True, True, True),
    "BK": (True, True, False),
    "MM": (True, True, False),
}

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Region:
    x_lo: float
    x_hi: float
    t_lo: float = 0.0
    t_hi: float = 5.0
    nx: int = 2001
    nt: int = 101

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_lo, self.t_hi, self.nt)

    def refined(self) -> "Region":
        return Region(self.x_lo, self.x_hi, self.t_lo, self.t_hi, 2 * self.nx - 1, 2 * self.nt - 1)

    def to_dict(self) -> dict:
        return {"x": [self.x_lo, self.x_hi], "t": [self.t_lo, self.t_hi], "nx": self.nx, "nt": self.nt}


def default_region(model: ShortRateModel, T: float = 5.0) -> Region:
    if model.domain is Domain.HALF:
        return Region(1e-4, 5.0, 0.0, T)
    return Region(-2.0, 5.0, 0.0, T)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    witness: Optional[tuple] = None  # (x, t, value, quantity)
    tol: float = 0.0
    branch: str = ""

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            w = {"x": self.witness[0], "t": self.witness[1], "value": self.witness[2], "quantity": self.witness[3]}
        return {"pass": self.passed, "witness": w, "tol": self.tol, "branch": self.branch}


@dataclass(frozen=True)
class ShapeReport:
    model: str
    c_condition: Verdict
    lcv_condition: Verdict
    lcc_condition: Verdict
    affine: Verdict
    region: Region
    derivatives: str = "analytic"
    params: Mapping = field(default_factory=dict)

    @property
    def verdicts(self) -> tuple[bool, bool, bool]:
        return (self.c_condition.passed, self.lcv_condition.passed, self.lcc_condition.passed)

    def first_witness(self):
        for v in (self.c_condition, self.lcv_condition, self.lcc_condition):
            if not v.passed:
                return v.witness
        return None

    def row(self) -> dict:
        yn = {True: "Yes", False: "No"}
        w = self.first_witness()
        return {
            "model": self.model,
            "C": yn[self.c_condition.passed],
            "LCV": yn[self.lcv_condition.passed],
            "LCC": yn[self.lcc_condition.passed],
            "witness_x": "" if w is None else w[0],
            "witness_t": "" if w is None else w[1],
            "witness_value": "" if w is None else w[2],
        }

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "C": self.c_condition.to_dict(),
            "LCV": self.lcv_condition.to_dict(),
            "LCC": self.lcc_condition.to_dict(),
            "affine": self.affine.to_dict(),
            "region": self.region.to_dict(),
            "derivatives": self.derivatives,
        }


# -- derivative sampling -----------------------------------------------------


def _alpha_fn(model):
    return lambda z, t: model.alpha(z, t)


def _sample(model: ShortRateModel, quantity: str, region: Region, mode: str):
    """Values of ``quantity`` (and an additive rounding allowance) on the region.

    ``quantity`` is one of beta_xx, alpha_x, alpha_xx.  Returns two arrays
    of shape (nt, nx).
    """
    x = region.x
    ts = region.t
    analytic = mode == "analytic" and model.has_analytic_derivatives
    order = 1 if quantity == "alpha_x" else 2
    base = model.drift if quantity.startswith("beta") else _alpha_fn(model)
    values = np.empty((ts.size, x.size))
    rounding = np.zeros_like(values)
    for j, t in enumerate(ts):
        t = float(t)
        if analytic:
            fn = {"beta_xx": model.drift_xx, "alpha_x": model.alpha_x, "alpha_xx": model.alpha_xx}[quantity]
            values[j] = fn(x, t)
        else:
            f = lambda z: np.asarray(base(z, t), dtype=float)  # noqa: E731
            values[j] = central_difference(f, x, order)
            h = default_step(x)
            mag = np.abs(f(x - h)) + 2 * np.abs(f(x)) + np.abs(f(x + h))
            rounding[j] = 16 * _EPS * mag / (h * h if order == 2 else 2 * h)
    return values, rounding


def _tol(values, rounding):
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    return 1e-8 * (1.0 + scale) + rounding


def _witness(region: Region, values, excess, quantity: str):
    # largest violation on the region
    j, i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    return (float(region.x[i]), float(region.t[j]), float(values[j, i]), quantity)


def _upper(model, quantity, bound, region, mode):
    """sup quantity <= bound (+tol)."""
    v, r = _sample(model, quantity, region, mode)
    tol = _tol(v, r)
    excess = v - bound - tol
    if np.any(excess > 0):
        return False, _witness(region, v, excess, quantity), float(np.max(tol))
    return True, None, float(np.max(tol))


def _lower(model, quantity, bound, region, mode):
    """inf quantity >= bound (-tol)."""
    v, r = _sample(model, quantity, region, mode)
    tol = _tol(v, r)
    excess = bound - v - tol
    if np.any(excess > 0):
        return False, _witness(region, v, excess, quantity), float(np.max(tol))
    return True, None, float(np.max(tol))


def _absolute(model, quantity, region, mode):
    v, r = _sample(model, quantity, region, mode)
    tol = _tol(v, r)
    excess = np.abs(v) - tol
    if np.any(excess > 0):
        return False, _witness(region, v, excess, quantity), float(np.max(tol))
    return True, None, float(np.max(tol))


def _all(*checks, branch=""):
    tol = 0.0
    for ok, w, t in checks:
        tol = max(tol, t)
        if not ok:
            return Verdict(False, w, tol, branch)
    return Verdict(True, None, tol, branch)


# -- public checks -----------------------------------------------------------


def check_convexity_condition(model: ShortRateModel, region: Region | None = None, mode: str = "analytic") -> Verdict:
    """``beta_xx <= 2`` on the region."""
    region = region or default_region(model)
    return _all(_upper(model, "beta_xx", 2.0, region, mode))


def check_lcv_condition(model: ShortRateModel, region: Region | None = None, mode: str = "analytic") -> Verdict:
    """``alpha`` convex and ``beta`` concave on the region."""
    region = region or default_region(model)
    return _all(
        _lower(model, "alpha_xx", 0.0, region, mode),
        _upper(model, "beta_xx", 0.0, region, mode),
    )


def check_lcc_condition(model: ShortRateModel, region: Region | None = None, mode: str = "analytic") -> Verdict:
    """Log-concavity condition, full-line or half-line branch per the model domain."""
    region = region or default_region(model)
    if model.domain is Domain.FULL:
        return _all(
            _absolute(model, "alpha_x", region, mode),
            _lower(model, "beta_xx", 0.0, region, mode),
            branch="alpha-constant-in-x",
        )
    boundary = []
    zero = np.array([0.0])
    for t in region.t:
        a0 = float(model.alpha(zero, float(t))[0])
        b0 = float(model.drift(zero, float(t))[0])
        if abs(a0) > 1e-12:
            boundary.append((False, (0.0, float(t), a0, "alpha(0,t)"), 1e-12))
            break
        if b0 < -1e-12:
            boundary.append((False, (0.0, float(t), b0, "beta(0,t)"), 1e-12))
            break
    return _all(
        *boundary,
        _upper(model, "alpha_xx", 0.0, region, mode),
        _lower(model, "beta_xx", 0.0, region, mode),
        branch="half-line-degenerate",
    )


def check_affine(model: ShortRateModel, region: Region | None = None, mode: str = "analytic") -> Verdict:
    """Both coefficients linear in x: ``beta_xx = alpha_xx = 0``."""
    region = region or default_region(model)
    return _all(
        _absolute(model, "beta_xx", region, mode),
        _absolute(model, "alpha_xx", region, mode),
    )


def classify(model: ShortRateModel, region: Region | None = None, mode: str = "analytic") -> ShapeReport:
    region = region or default_region(model)
    return ShapeReport(
        model=model.name,
        c_condition=check_convexity_condition(model, region, mode),
        lcv_condition=check_lcv_condition(model, region, mode),
        lcc_condition=check_lcc_condition(model, region, mode),
        affine=check_affine(model, region, mode),
        region=region,
        derivatives=mode if (mode == "fd" or model.has_analytic_derivatives) else "fd",
        params=dict(model.spec.get("params", {})),
    )


def table2_report(
    param_sets: Mapping[str, Mapping] | None = None,
    names=REGISTRY_NAMES,
    mode: str = "analytic",
    T: float = 5.0,
    refine: int = 0,
) -> list[ShapeReport]:
    """Classify every registry model (one parameter set each)."""
    reports = []
    for name in names:
        params = dict(DEFAULT_PARAMS[name])
        params.update((param_sets or {}).get(name, {}))
        model = registry(name, params)
        region = default_region(model, T)
        for _ in range(refine):
            region = region.refined()
        reports.append(classify(model, region, mode))
    return reports


def matches_table2(reports) -> bool:
    got = {r.model: r.verdicts for r in reports}
    return got == {name: TABLE2[name] for name in got} and set(got) == set(TABLE2)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    fields = ["model", "C", "LCV", "LCC", "witness_x", "witness_t", "witness_value"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        row = r.row()
        for key in ("witness_x", "witness_t", "witness_value"):
            if row[key] != "":
                row[key] = f"{row[key]:.17g}"
        writer.writerow(row)
    return buf.getvalue()


_VERDICT_SCHEMA = {
    "type": "object",
    "required": ["pass", "witness", "tol", "branch"],
    "properties": {
        "pass": {"type": "boolean"},
        "tol": {"type": "number"},
        "branch": {"type": "string"},
        "witness": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["x", "t", "value", "quantity"],
                    "properties": {
                        "x": {"type": "number"},
                        "t": {"type": "number"},
                        "value": {"type": "number"},
                        "quantity": {"type": "string"},
                    },
                },
            ]
        },
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["reports", "matches_table2"],
    "properties": {
        "matches_table2": {"type": "boolean"},
        "reports": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["model", "C", "LCV", "LCC", "affine", "region", "derivatives", "params"],
                "properties": {
                    "model": {"type": "string"},
                    "C": _VERDICT_SCHEMA,
                    "LCV": _VERDICT_SCHEMA,
                    "LCC": _VERDICT_SCHEMA,
                    "affine": _VERDICT_SCHEMA,
                    "derivatives": {"enum": ["analytic", "fd"]},
                    "params": {"type": "object"},
                    "region": {
                        "type": "object",
                        "required": ["x", "t", "nx", "nt"],
                    },
                },
            },
        },
    },
}
