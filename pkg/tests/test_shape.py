import csv
import io
import json

import jsonschema
import numpy as np
import pytest

from termshape.models import REGISTRY_NAMES, custom, registry
from termshape.shape import (
    REPORT_SCHEMA,
    Region,
    check_affine,
    check_convexity_condition,
    check_lcc_condition,
    check_lcv_condition,
    classify,
    matches_table2,
    reports_to_csv,
    table2_report,
)

# (C, LCV, LCC) transcribed from the published table
GOLDEN = {
    "V": (True, True, True),
    "CIR": (True, True, True),
    "D": (True, True, False),
    "EV": (True, True, False),
    "HW": (True, True, True),
    "BK": (True, True, False),
    "MM": (True, True, False),
}


def test_convexity_condition_examples():
    assert check_convexity_condition(registry("V")).passed
    quad = custom("x + 2*x^2", "0.1", "full")
    v = check_convexity_condition(quad, Region(0.0, 1.0), mode="fd")
    assert not v.passed
    assert v.witness[2] == pytest.approx(4.0, abs=1e-4)
    assert v.witness[3] == "beta_xx"
    assert check_convexity_condition(registry("EV")).passed
    assert check_convexity_condition(registry("EV"), mode="fd").passed


def test_ev_second_derivative_by_hand():
    m = registry("EV")
    x = np.linspace(0.01, 5, 50)
    np.testing.assert_allclose(m.drift_xx(x, 0.0), -0.5 / x, rtol=1e-12)


def test_lcv_condition_examples():
    assert check_lcv_condition(registry("D")).passed
    assert check_lcv_condition(registry("CIR")).passed
    concave_alpha = custom("0", "sqrt(2*max(1 - x^2, 0))", "full")
    v = check_lcv_condition(concave_alpha, Region(-0.5, 0.5), mode="fd")
    assert not v.passed
    assert v.witness[3] == "alpha_xx" and v.witness[2] == pytest.approx(-2.0, abs=1e-3)


def test_lcc_condition_branches():
    for name in ("V", "HW"):
        v = check_lcc_condition(registry(name))
        assert v.passed and v.branch == "alpha-constant-in-x"
    v = check_lcc_condition(registry("CIR"))
    assert v.passed and v.branch == "half-line-degenerate"
    v = check_lcc_condition(registry("D"))
    assert not v.passed
    assert v.witness[2] == pytest.approx(0.2**2, rel=1e-9)


def test_affine_flag():
    for name in REGISTRY_NAMES:
        assert check_affine(registry(name)).passed == (name in ("V", "CIR", "HW"))


@pytest.mark.parametrize("mode", ["analytic", "fd"])
def test_table2_reproduced(mode):
    reports = table2_report(mode=mode)
    assert {r.model: r.verdicts for r in reports} == GOLDEN
    assert matches_table2(reports)


@pytest.mark.parametrize("name", ["V", "BK"])
def test_single_model_rows(name):
    (report,) = table2_report(names=(name,))
    assert report.verdicts == GOLDEN[name]


def test_verdicts_invariant_under_refinement():
    base = table2_report()
    fine = table2_report(refine=1)
    assert [r.verdicts for r in base] == [r.verdicts for r in fine]


def test_failures_carry_witnesses():
    for r in table2_report():
        for v in (r.c_condition, r.lcv_condition, r.lcc_condition):
            if not v.passed:
                assert v.witness is not None and abs(v.witness[2]) > v.tol


def test_csv_layout():
    text = reports_to_csv(table2_report())
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["model", "C", "LCV", "LCC", "witness_x", "witness_t", "witness_value"]
    assert [r["model"] for r in rows] == list(REGISTRY_NAMES)
    assert rows[0]["witness_x"] == ""
    assert rows[2]["LCC"] == "No" and float(rows[2]["witness_value"]) > 0


def test_json_validates_against_schema():
    reports = table2_report()
    doc = json.loads(json.dumps({"reports": [r.to_dict() for r in reports], "matches_table2": matches_table2(reports)}))
    jsonschema.validate(doc, REPORT_SCHEMA)


def test_classify_serialises_region():
    r = classify(registry("CIR"))
    assert r.to_dict()["region"]["x"] == [1e-4, 5.0]
