import json
import subprocess
import sys

import jsonschema
import pytest

from termshape.cli import main
from termshape.shape import REPORT_SCHEMA


def _run(tmp_path, command, config=None, *flags, name="run"):
    out = tmp_path / name
    argv = [command, "--out", str(out), *flags]
    if config is not None:
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv), out


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _assert_complete(out):
    manifest = _manifest(out)
    listed = {f["name"] for f in manifest["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    for f in manifest["files"]:
        assert (out / f["name"]).stat().st_size == f["bytes"] > 0
    return manifest


V = {"type": "registry", "name": "V"}


def test_price_writes_surface_and_probe(tmp_path):
    rc, out = _run(tmp_path, "price", {"model": V, "grid": {"nx": 401, "nt": 200}})
    assert rc == 0
    manifest = _assert_complete(out)
    assert manifest["probe"] <= 1e-6
    assert manifest["config_hash"] and manifest["version"]
    header = (out / "surface.csv").read_text().splitlines()[0]
    assert header.startswith("x,0,")


def test_price_with_mc(tmp_path):
    cfg = {"model": V, "T": 1.0, "grid": {"nx": 401, "nt": 100}, "mc": {"n_paths": 20000, "n_steps": 100}}
    rc, out = _run(tmp_path, "price", cfg, "--seed", "42")
    assert rc == 0
    manifest = _assert_complete(out)
    (est,) = manifest["mc_estimates"]
    assert est["seed"] == 42
    assert abs(est["mean"] - manifest["pde_at_x0"]) <= 4 * est["stderr"] + 1e-4


def test_price_grid_too_small(tmp_path, capsys):
    rc, _ = _run(tmp_path, "price", {"model": V}, "--grid", "2,400")
    assert rc == 2
    assert "grid too small" in capsys.readouterr().err


@pytest.mark.parametrize(
    "config",
    [
        {"model": V, "colour": "blue"},
        {"model": {"type": "registry", "name": "XYZ"}},
        {"model": {"type": "custom", "drift": "k*x", "vol": "0"}},
        {"model": {"type": "custom", "drift": "2*(1+", "vol": "0"}},
        {},
    ],
)
def test_config_errors(tmp_path, config):
    assert _run(tmp_path, "price", config)[0] == 2


def test_bad_flags(tmp_path):
    assert main(["price", "--grid", "abc"]) == 2
    assert main(["price", "--seed", "-1"]) == 2
    assert main(["frobnicate"]) == 2


def test_missing_config_file(tmp_path):
    assert main(["price", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2


def test_numeric_failure_exit_code(tmp_path, capsys):
    # explicit stepping far beyond its stability limit overflows
    cfg = {
        "model": {"type": "registry", "name": "V", "params": {"sigma": 1.0}},
        "solver": {"theta": 0, "rannacher_steps": 0},
        "grid": {"x_min": -5, "x_max": 5, "nx": 801, "nt": 200},
        "probe": False,
    }
    with pytest.warns(UserWarning, match="explicit part dominates"):
        rc, _ = _run(tmp_path, "price", cfg)
    assert rc == 3
    assert "non-finite value at time step" in capsys.readouterr().err


def test_option_command(tmp_path):
    cfg = {
        "models": [{"type": "registry", "name": "V", "params": {"sigma": 0.02}}, V],
        "option": {"strike": 0.7, "T1": 1.0, "T2": 3.0},
        "grid": {"nx": 401, "nt": 100},
    }
    rc, out = _run(tmp_path, "option", cfg)
    assert rc == 0
    manifest = _assert_complete(out)
    props = [r["property"] for r in manifest["reports"]]
    assert props.count("convexity") == 4 and props.count("dominance") == 1


def test_option_tower_consistency(tmp_path):
    cfg = {"model": V, "option": {"strike": 0.0, "T1": 1.0, "T2": 3.0}, "grid": {"nx": 801, "nt": 200}}
    rc, out = _run(tmp_path, "option", cfg)
    assert rc == 0
    assert _manifest(out)["tower_consistency"] <= 5e-4


def test_option_requires_ordered_expiries(tmp_path):
    cfg = {"model": V, "option": {"strike": 0.7, "T1": 3.0, "T2": 1.0}}
    assert _run(tmp_path, "option", cfg)[0] == 2


def test_check_registry_convexity(tmp_path):
    rc, out = _run(tmp_path, "check", {"models": "registry", "checks": ["convexity"], "grid": {"nx": 401, "nt": 200}})
    assert rc == 0
    assert len(json.loads((out / "checks.json").read_text())) == 7
    _assert_complete(out)


def test_check_dothan_log_concavity_fails(tmp_path):
    rc, out = _run(tmp_path, "check", {"model": {"type": "registry", "name": "D"}, "checks": ["log-concave"]})
    assert rc == 1
    (report,) = json.loads((out / "checks.json").read_text())
    assert report["verdict"] == "fail" and report["violation"] > report["atol"] + report["h2_allowance"]


def test_check_dominance_grid_mismatch(tmp_path, capsys):
    cfg = {
        "models": [{"type": "registry", "name": "V", "params": {"sigma": 0.02}}, V],
        "checks": ["dominance"],
        "grids": [
            {"x_min": -5, "x_max": 5, "nx": 201, "nt": 50},
            {"x_min": -5, "x_max": 5, "nx": 401, "nt": 50},
        ],
    }
    assert _run(tmp_path, "check", cfg)[0] == 2
    assert "grid mismatch" in capsys.readouterr().err


def test_check_unknown_name(tmp_path):
    assert _run(tmp_path, "check", {"model": V, "checks": ["wiggly"]})[0] == 2


def test_table2_default_and_schema(tmp_path, capsys):
    rc, out = _run(tmp_path, "table2")
    assert rc == 0
    doc = json.loads((out / "table2.json").read_text())
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["matches_table2"] is True
    assert capsys.readouterr().out.splitlines()[0] == "model,C,LCV,LCC,witness_x,witness_t,witness_value"
    _assert_complete(out)


def test_table2_parameter_error(tmp_path):
    assert _run(tmp_path, "table2", {"params": {"MM": {"lambda": 0.4}}})[0] == 2


def test_compare_command(tmp_path):
    cfg = {
        "models": [{"type": "registry", "name": "CIR", "params": {"sigma": 0.3}}, {"type": "registry", "name": "CIR"}],
        "T": 1.0,
        "grid": {"nx": 401, "nt": 100},
        "mc": {"n_paths": 20000, "n_steps": 100, "scheme": "full-truncation-euler"},
    }
    rc, out = _run(tmp_path, "compare", cfg)
    assert rc == 0
    doc = json.loads((out / "compare.json").read_text())
    assert doc["sign_ok"] and doc["dominance"]["verdict"] == "pass"


def test_converge_unknown_kind(tmp_path):
    assert _run(tmp_path, "converge", {"converge": {"kind": "magic"}})[0] == 2


def test_same_config_same_bytes(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = {"model": V, "T": 1.0, "grid": {"nx": 201, "nt": 50}, "mc": {"n_paths": 5000, "n_steps": 20}}
    _, a = _run(tmp_path, "price", cfg, name="a")
    _, b = _run(tmp_path, "price", cfg, name="b")
    for name in ("surface.csv", "surface.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "termshape", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("termshape ")
