import json

import numpy as np
import pytest

from gridexpand import bilevel, equilibrium, io
from gridexpand.qp import ExpansionPlan

CFG3 = io.packaged("illustrative_3node.cfg")
CSV5 = io.packaged("nordic5_hourly.csv")


def test_packaged_round_trip(three_node, tmp_path):
    system, policy, _ = three_node
    assert system.slope[0, 0, 2] == 0.0075
    text = io.dumps_system(system, policy)
    assert text == CFG3.read_text(encoding="utf-8")
    path = tmp_path / "again.cfg"
    io.save_system(system, policy, path)
    s2, p2 = io.load_system(path)
    assert io.dumps_system(s2, p2) == text
    assert p2 == policy


def test_missing_field_located(tmp_path):
    text = CFG3.read_text(encoding="utf-8")
    bad = tmp_path / "bad.cfg"
    bad.write_text(text.replace(", investment = 15000.0 }", " }", 1), encoding="utf-8")
    with pytest.raises(io.ConfigError) as err:
        io.load_system(bad)
    assert any("lines[0]" in loc and "investment" in msg + loc for loc, msg in err.value.errors)


def test_invalid_values_rejected(tmp_path):
    text = CFG3.read_text(encoding="utf-8").replace("probability = 1.0", "probability = 0.9")
    bad = tmp_path / "bad.cfg"
    bad.write_text(text, encoding="utf-8")
    with pytest.raises(io.ConfigError):
        io.load_system(bad)
    bad.write_text("not = [toml", encoding="utf-8")
    with pytest.raises(io.ConfigError):
        io.load_system(bad)


def test_hourly_csv_fixture():
    series = io.load_hourly_csv(CSV5)
    assert len(series) == 15
    assert {s.kind for s in series} == {"demand", "wind", "solar"}
    assert all(s.values.size == 8760 for s in series)


def _lines():
    return CSV5.read_text(encoding="utf-8").splitlines()


def test_hourly_csv_errors(tmp_path):
    lines = _lines()
    path = tmp_path / "h.csv"
    path.write_text("\n".join(lines + [lines[-1].replace("8760,", "8761,", 1)]) + "\n")
    with pytest.raises(io.ConfigError, match="8761"):
        io.load_hourly_csv(path)
    cells = lines[5].split(",")
    cells[3] = ""
    path.write_text("\n".join(lines[:5] + [",".join(cells)] + lines[6:]) + "\n")
    with pytest.raises(io.ConfigError, match=r"row 6, column 4"):
        io.load_hourly_csv(path)
    path.write_text("\n".join(["hour,FI:tide"] + [f"{h},1" for h in range(1, 8761)]) + "\n")
    with pytest.raises(io.ConfigError, match="tide"):
        io.load_hourly_csv(path)


def test_hourly_csv_round_trip(tmp_path):
    series = io.load_hourly_csv(CSV5)
    path = tmp_path / "h.csv"
    io.write_hourly_csv(series, path)
    back = io.load_hourly_csv(path)
    for a, b in zip(series, back):
        assert a.key == b.key
        np.testing.assert_array_equal(a.values, b.values)


def test_outcome_json_round_trip(three_node, tmp_path):
    system, _, eff = three_node
    out = equilibrium.solve_market(system, eff, ExpansionPlan((0.0, 5.0, 10.0)))
    path = tmp_path / "outcome.json"
    io.write_results(out, path, system=system)
    doc = json.loads(path.read_text())
    assert doc["type"] == "MarketOutcome"
    assert "primal" in doc and "dual" in doc
    assert "(s1,m1,1)" in doc["primal"]["q"]
    back = io.outcome_from_record(system, doc)
    assert back.plan == out.plan
    rep = equilibrium.kkt_residuals(system, eff, None, back)
    assert rep.passed, rep.violations()


def test_outcome_record_missing_block(three_node):
    system, _, eff = three_node
    out = equilibrium.solve_market(system, eff, ExpansionPlan.zero(system))
    doc = io.outcome_record(system, out)
    del doc["dual"]["theta"]
    with pytest.raises(io.ConfigError, match="theta"):
        io.outcome_from_record(system, doc)


def test_bilevel_solution_round_trip(three_node, tmp_path):
    system, _, eff = three_node
    sol = bilevel.solve_bilevel_exact(system, eff)
    path = tmp_path / "sol.json"
    io.write_results(sol, path)
    doc = io.read_json(path)
    assert doc["welfare"] == float(io.fmt_float(sol.welfare))
    io.write_results(sol, tmp_path / "sol.csv")
    assert (tmp_path / "sol.csv").read_text().startswith("field,value\n")


def test_fmt_float():
    assert io.fmt_float(1 / 3) == "0.333333333333"
    assert io.fmt_float(float("inf")) == "inf"
    assert io.fmt_float(float("nan")) == "nan"


def test_unknown_format(three_node, tmp_path):
    with pytest.raises(ValueError):
        io.write_results({"a": 1}, tmp_path / "x.xml")
