"""Command-line driver.

Every subcommand reads a JSON run configuration (``--config``), applies the
command-line overrides, writes its outputs into ``--out`` and finishes with
a ``manifest.json`` listing every file written.  Exit codes: 0 ok, 1 a
requested check failed, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from . import checks as _checks
from . import mc as _mc
from . import shape as _shape
from ._canonical import canonical_json, digest
from .expr import ExpressionError
from .models import REGISTRY_NAMES, Payoff, RateCap, ShortRateModel, cir, from_spec, payoff_from_spec, registry
from .pde import (
    PROBE_THRESHOLD,
    Grid,
    PriceSurface,
    SolverConfig,
    boundary_influence_probe,
    default_grid,
    price_bond_option,
    solve,
)

__all__ = ["RunConfig", "RunManifest", "main", "EXIT_OK", "EXIT_CHECK", "EXIT_CONFIG", "EXIT_NUMERIC"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("price", "option", "check", "table2", "compare", "converge")
CHECKS = ("convexity", "log-convex", "log-concave", "monotone", "dominance", "necessity")

_KEYS = {
    "model",
    "models",
    "payoff",
    "x0",
    "T",
    "grid",
    "solver",
    "mc",
    "checks",
    "option",
    "converge",
    "params",
    "region",
    "probe",
    "grids",
}


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Normalized run configuration; ``data`` is its canonical JSON form."""

    command: str
    data: Mapping
    out: Path = field(default=Path("out"), compare=False)

    @property
    def config_hash(self) -> str:
        return digest({"command": self.command, **self.data})

    def to_dict(self) -> dict:
        return {"command": self.command, **self.data}

    def get(self, key, default=None):
        return self.data.get(key, default)

    @classmethod
    def build(cls, command: str, raw: Mapping, args: argparse.Namespace) -> "RunConfig":
        unknown = set(raw) - _KEYS
        if unknown:
            raise ConfigError(f"unknown configuration key(s) {sorted(unknown)}")
        data = json.loads(json.dumps(raw))
        data.setdefault("x0", 0.05)
        data.setdefault("T", 5.0)
        grid = dict(data.get("grid") or {})
        if args.grid is not None:
            grid["nx"], grid["nt"] = args.grid
        grid.setdefault("nx", 801)
        grid.setdefault("nt", 400)
        data["grid"] = grid
        if args.region is not None:
            data["region"] = list(args.region)
        if args.seed is not None:
            data["mc"] = {**(data.get("mc") or {}), "seed": args.seed}
        return cls(command, data, Path(args.out))


@dataclass
class RunManifest:
    config_hash: str
    command: str
    config: Mapping
    files: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    mc: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "artifact": "termshape",
            "version": __version__,
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "timestamps": {"created": _timestamp()},
            "files": self.files,
            "reports": self.reports,
            "mc_estimates": self.mc,
            **self.extra,
        }


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        moment = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


class _Writer:
    """Writes run outputs and records them in the manifest."""

    def __init__(self, cfg: RunConfig):
        self.dir = cfg.out
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(cfg.config_hash, cfg.command, cfg.to_dict())

    def text(self, name: str, content: str) -> None:
        if not content:
            raise ValueError(f"refusing to write empty output {name}")
        data = content.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.manifest.files.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})

    def json(self, name: str, obj) -> None:
        self.text(name, canonical_json(obj, indent=2))

    def surface(self, stem: str, surface: PriceSurface) -> None:
        self.text(f"{stem}.csv", surface.to_csv())
        self.json(f"{stem}.json", surface.envelope())

    def report(self, report) -> None:
        self.manifest.reports.append(report.to_dict())

    def finish(self) -> None:
        (self.dir / "manifest.json").write_text(canonical_json(self.manifest.to_dict(), indent=2), encoding="utf-8")


# -- config helpers ----------------------------------------------------------


def _models(cfg: RunConfig) -> list[ShortRateModel]:
    specs = cfg.get("models")
    if specs == "registry":
        specs = [{"type": "registry", "name": n} for n in REGISTRY_NAMES]
    if specs is None:
        if cfg.get("model") is None:
            raise ConfigError("configuration needs 'model' or 'models'")
        specs = [cfg.get("model")]
    if not isinstance(specs, list) or not specs:
        raise ConfigError("'models' must be a non-empty list or \"registry\"")
    return [from_spec(s) for s in specs]


def _solver(cfg: RunConfig) -> SolverConfig:
    raw = dict(cfg.get("solver") or {})
    cap = raw.pop("rate_cap", None)
    allowed = {"theta", "rannacher_steps", "drift_scheme", "origin_order", "estimate_error"}
    if set(raw) - allowed:
        raise ConfigError(f"unknown solver option(s) {sorted(set(raw) - allowed)}")
    if cap is not None:
        raw["rate_cap"] = RateCap(float(cap["level"]), float(cap.get("width", 1.0)))
    return SolverConfig(**raw)


def _grid(cfg: RunConfig, models: list[ShortRateModel], T: float | None = None) -> Grid:
    g = cfg.get("grid")
    T = float(cfg.get("T") if T is None else T)
    nx, nt = int(g["nx"]), int(g["nt"])
    if "x_min" in g or "x_max" in g:
        return Grid(float(g["x_min"]), float(g["x_max"]), nx, T, nt)
    base = default_grid(models[0], float(cfg.get("x0")), T, 3, 1, others=tuple(models[1:]))
    return Grid(base.x_min, base.x_max, nx, T, nt)


def _report_region(cfg: RunConfig, grid: Grid) -> tuple[float, float]:
    """``--region`` if given, else ``x0 +- 1`` clipped to the grid."""
    region = cfg.get("region")
    if region is not None:
        return float(region[0]), float(region[1])
    x0 = float(cfg.get("x0"))
    return max(grid.x_min, x0 - 1.0), min(grid.x_max, x0 + 1.0)


def _mc_config(cfg: RunConfig, **defaults) -> _mc.McConfig:
    raw = {**defaults, **(cfg.get("mc") or {})}
    return _mc.McConfig(**raw)


def _check_surface(name: str, surface: PriceSurface):
    if name == "convexity":
        return _checks.convexity_check(surface)
    if name in ("log-convex", "log-concave"):
        return _checks.log_curvature_check(surface, name.split("-")[1])
    if name == "monotone":
        return _checks.monotonicity_x_check(surface)
    raise ConfigError(f"unknown check {name!r}; expected one of {CHECKS}")


# -- commands ----------------------------------------------------------------


def cmd_price(cfg: RunConfig) -> int:
    (model,) = _models(cfg)[:1]
    payoff = payoff_from_spec(cfg.get("payoff"))
    grid = _grid(cfg, [model])
    solver = _solver(cfg)
    surface = solve(model, payoff, grid, solver)
    w = _Writer(cfg)
    if cfg.get("probe", True):
        probe = boundary_influence_probe(model, payoff, grid, solver, _report_region(cfg, grid))
        surface = surface.with_probe(probe)
        if probe > PROBE_THRESHOLD:
            print(f"warning: boundary influence {probe:.3g} exceeds {PROBE_THRESHOLD:g}", file=sys.stderr)
    w.surface("surface", surface)
    w.manifest.extra["probe"] = surface.probe
    if cfg.get("mc") is not None:
        est = _mc.price(model, payoff, float(cfg.get("x0")), 0.0, grid.T, _mc_config(cfg), solver.rate_cap)
        w.manifest.mc.append(est.to_dict())
        w.manifest.extra["pde_at_x0"] = surface.at(float(cfg.get("x0")))
    w.finish()
    return EXIT_OK


def cmd_option(cfg: RunConfig) -> int:
    opt = cfg.get("option")
    if not opt:
        raise ConfigError("option command needs an 'option' block with strike, T1, T2")
    strike, T1, T2 = float(opt["strike"]), float(opt["T1"]), float(opt["T2"])
    if not T2 > T1:
        raise ConfigError(f"need T2 > T1, got T1={T1:g}, T2={T2:g}")
    models = _models(cfg)
    solver = _solver(cfg)
    grid = _grid(cfg, models, T=T1)
    w = _Writer(cfg)
    surfaces = []
    for k, model in enumerate(models):
        s = price_bond_option(model, strike, T1, T2, grid, solver)
        surfaces.append(s)
        stem = "option" if len(models) == 1 else f"option_{k}"
        w.surface(stem, s)
        w.surface(stem + "_inner", s.inner)
        w.report(_checks.convexity_check(s))
        w.report(_checks.convexity_check(s.inner))
    for hi, lo in zip(surfaces, surfaces[1:]):
        w.report(_checks.dominance_check(hi, lo))
    if strike == 0.0:
        direct = solve(models[0], Payoff.bond(), Grid(grid.x_min, grid.x_max, grid.nx, T2, grid.nt * 3))
        rows = _checks.report_slice(grid.nx)
        a = surfaces[0].values[rows, -1]
        b = direct.values[rows, -1]
        w.manifest.extra["tower_consistency"] = float(np.max(np.abs(a - b) / np.abs(b)))
    w.finish()
    return EXIT_CHECK if any(r["verdict"] != "pass" for r in w.manifest.reports) else EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    requested = cfg.get("checks") or ["convexity"]
    for name in requested:
        if name not in CHECKS:
            raise ConfigError(f"unknown check {name!r}; expected one of {CHECKS}")
    w = _Writer(cfg)
    reports = []
    if "necessity" in requested:
        reports.append(_checks.necessity_counterexample())
    surface_checks = [c for c in requested if c not in ("necessity", "dominance")]
    if surface_checks or "dominance" in requested:
        models = _models(cfg)
        payoff = payoff_from_spec(cfg.get("payoff"))
        solver = _solver(cfg)
        grids = cfg.get("grids")
        if grids is not None and len(grids) != len(models):
            raise ConfigError("'grids' needs one entry per model")
        surfaces = []
        for k, model in enumerate(models):
            if grids is not None:
                g = grids[k]
                grid = Grid(float(g["x_min"]), float(g["x_max"]), int(g["nx"]), float(cfg.get("T")), int(g["nt"]))
            elif "dominance" in requested:
                grid = _grid(cfg, models)
            else:
                grid = _grid(cfg, [model])
            surfaces.append(solve(model, payoff, grid, solver))
        for s in surfaces:
            for name in surface_checks:
                reports.append(_check_surface(name, s))
        if "dominance" in requested:
            if len(surfaces) != 2:
                raise ConfigError("dominance needs exactly two models: [hi, lo]")
            reports.append(_checks.dominance_check(surfaces[0], surfaces[1]))
    for r in reports:
        w.report(r)
    w.json("checks.json", [r.to_dict() for r in reports])
    w.finish()
    return EXIT_CHECK if any(not r.passed for r in reports) else EXIT_OK


def cmd_table2(cfg: RunConfig) -> int:
    params = cfg.get("params") or {}
    unknown = set(params) - set(REGISTRY_NAMES)
    if unknown:
        raise ConfigError(f"unknown model(s) in params: {sorted(unknown)}")
    reports = _shape.table2_report(params, T=float(cfg.get("T")))
    region = cfg.get("region")
    if region is not None:
        reports = []
        for name in REGISTRY_NAMES:
            model = registry(name, params.get(name))
            base = _shape.default_region(model, float(cfg.get("T")))
            reports.append(_shape.classify(model, replace(base, x_lo=float(region[0]), x_hi=float(region[1]))))
    ok = _shape.matches_table2(reports)
    w = _Writer(cfg)
    w.text("table2.csv", _shape.reports_to_csv(reports))
    w.json("table2.json", {"reports": [r.to_dict() for r in reports], "matches_table2": ok})
    w.manifest.extra["matches_table2"] = ok
    w.finish()
    sys.stdout.write(_shape.reports_to_csv(reports))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_compare(cfg: RunConfig) -> int:
    """Coupled MC and PDE comparison of ``models = [hi, lo]`` (hi prices higher)."""
    models = _models(cfg)
    if len(models) != 2:
        raise ConfigError("compare needs exactly two models: [hi, lo]")
    payoff = payoff_from_spec(cfg.get("payoff"))
    solver = _solver(cfg)
    grid = _grid(cfg, models)
    hi, lo = (solve(m, payoff, grid, solver) for m in models)
    w = _Writer(cfg)
    dom = _checks.dominance_check(hi, lo)
    w.report(dom)
    ok = dom.passed
    if cfg.get("mc") is not None:
        mcfg = _mc_config(cfg)
        res = _mc.coupled_compare(models[0], models[1], payoff, float(cfg.get("x0")), 0.0, grid.T, mcfg)
        w.manifest.mc.extend([res.a.to_dict(), res.b.to_dict()])
        sign_ok = res.diff_mean >= -3.0 * res.diff_stderr
        w.json("compare.json", {"coupled": res.to_dict(), "sign_ok": sign_ok, "dominance": dom.to_dict()})
        ok = ok and sign_ok
    else:
        w.json("compare.json", {"dominance": dom.to_dict()})
    w.finish()
    return EXIT_OK if ok else EXIT_CHECK


def cmd_converge(cfg: RunConfig) -> int:
    conv = dict(cfg.get("converge") or {"kind": "mollification"})
    kind = conv.pop("kind", "mollification")
    w = _Writer(cfg)
    if kind == "mollification":
        k, theta, sigma = float(conv.get("k", 0.5)), float(conv.get("theta", 0.06)), float(conv.get("sigma", 0.2))
        ns = [int(n) for n in conv.get("ns", [1, 4, 16, 64])]
        T = float(conv.get("T", 1.0))
        x0 = float(cfg.get("x0"))
        mcfg = _mc_config(cfg, scheme="full-truncation-euler", n_paths=50_000, n_steps=250)
        res = _mc.continuity_experiment(
            cir(k, theta, sigma), lambda n: _mc.cir_mollified(k, theta, sigma, n), ns, Payoff.bond(), x0, 0.0, T, mcfg
        )
        ref = res.reference.mean
        gaps = [abs(e.mean - ref) / abs(ref) for e in res.estimates]
        ok = all(b < a for a, b in zip(gaps, gaps[1:])) and all(
            b < a for a, b in zip(res.sup_moments, res.sup_moments[1:])
        )
        ok = ok and gaps[-1] <= float(conv.get("tol", 2e-3))
        w.manifest.mc.extend([res.reference.to_dict(), *(e.to_dict() for e in res.estimates)])
        w.json("converge.json", {"kind": kind, "result": res.to_dict(), "relative_gaps": gaps, "pass": ok})
    elif kind == "cap":
        (model,) = _models(cfg)[:1]
        payoff = payoff_from_spec(cfg.get("payoff"))
        grid = _grid(cfg, [model])
        region = conv.get("gap_region")
        res = _checks.cap_convergence(
            model,
            payoff,
            grid,
            levels=tuple(conv.get("levels", (1, 2, 4, 8))),
            width=float(conv.get("width", 1.0)),
            region=None if region is None else tuple(region),
            config=_solver(cfg),
        )
        ok = res.monotone and res.gaps[-1] <= float(conv.get("tol", 1e-5))
        w.json("converge.json", {"kind": kind, "result": res.to_dict(), "pass": ok})
    else:
        raise ConfigError(f"unknown convergence experiment {kind!r}; expected mollification or cap")
    w.manifest.extra["pass"] = ok
    w.finish()
    return EXIT_OK if ok else EXIT_CHECK


_DISPATCH = {
    "price": cmd_price,
    "option": cmd_option,
    "check": cmd_check,
    "table2": cmd_table2,
    "compare": cmd_compare,
    "converge": cmd_converge,
}


# -- argument parsing --------------------------------------------------------


def _pair(kind):
    def parse(text: str):
        parts = text.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
        try:
            return tuple(kind(p) for p in parts)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="termshape", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"termshape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=_u64, help="Monte Carlo seed")
        p.add_argument("--grid", type=_pair(int), help="grid size nx,nt")
        p.add_argument("--region", type=_pair(float), help="x range xlo,xhi")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config code
        return int(exc.code or 0)
    try:
        raw = {}
        if args.config is not None:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(raw, dict):
                raise ConfigError("configuration must be a JSON object")
        cfg = RunConfig.build(args.command, raw, args)
        return _DISPATCH[args.command](cfg)
    except ArithmeticError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, ExpressionError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
