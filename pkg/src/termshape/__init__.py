"""Bond and bond-option pricing under diffusion short-rate models, with
numerical checks of shape properties (convexity, log-convexity,
log-concavity, monotonicity) of the resulting price surfaces."""

from .affine import AffineParams, affine_duration, bond_price, riccati_bond
from .checks import (
    CheckReport,
    convexity_check,
    dominance_check,
    duration,
    log_curvature_check,
    monotonicity_x_check,
    necessity_counterexample,
)
from .expr import Expression, evaluate, parse
from .mc import McConfig, McEstimate, coupled_compare, exact_ou_sample
from .mc import price as mc_price
from .models import Domain, Payoff, RateCap, ShortRateModel, custom, from_spec, registry
from .pde import Grid, PriceSurface, SolverConfig, default_grid, price_bond_option, solve, solve_halfline
from .shape import ShapeReport, classify, table2_report

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "CheckReport",
    "Domain",
    "Expression",
    "Grid",
    "McConfig",
    "McEstimate",
    "Payoff",
    "PriceSurface",
    "RateCap",
    "ShapeReport",
    "ShortRateModel",
    "SolverConfig",
    "affine_duration",
    "bond_price",
    "classify",
    "convexity_check",
    "coupled_compare",
    "custom",
    "default_grid",
    "dominance_check",
    "duration",
    "evaluate",
    "exact_ou_sample",
    "from_spec",
    "log_curvature_check",
    "mc_price",
    "monotonicity_x_check",
    "necessity_counterexample",
    "parse",
    "price_bond_option",
    "registry",
    "riccati_bond",
    "solve",
    "solve_halfline",
    "table2_report",
    "__version__",
]
