import csv
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from gridexpand import __version__, cli, io
from gridexpand.cli import main
from gridexpand.qp import build_centralized

CFG3 = str(io.packaged("illustrative_3node.cfg"))
NORDIC = str(io.packaged("nordic5_synth.cfg"))


def _load(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_solve_central(tmp_path, capsys):
    assert main(["solve-central", CFG3, str(tmp_path / "a")]) == 0
    sol = _load(tmp_path / "a" / "solution.json")
    assert sol["status"] == "optimal" and sol["kkt_passed"] is True
    man = _load(tmp_path / "a" / "manifest.json")
    assert man["version"] == __version__ and man["command"] == "solve-central"
    assert man["inputs"][CFG3] == cli.git_blob_sha1(open(CFG3, "rb").read())
    assert "KKT pass" in capsys.readouterr().out


def test_no_constants_offset(tmp_path, three_node):
    system, _, eff = three_node
    assert main(["solve-central", CFG3, str(tmp_path / "a")]) == 0
    assert main(["solve-central", CFG3, str(tmp_path / "b"), "--no-constants"]) == 0
    a = _load(tmp_path / "a" / "solution.json")["objective"]
    b = _load(tmp_path / "b" / "solution.json")["objective"]
    const = build_centralized(system, eff)[0].constant
    assert b - a == pytest.approx(-const, rel=1e-9)


def test_git_blob_hash():
    # matches `git hash-object` for the same bytes
    assert cli.git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_bad_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(open(CFG3).read().replace("slope", "slop", 1))
    assert main(["solve-central", str(bad), str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_verify_kkt(tmp_path, capsys):
    main(["solve-central", CFG3, str(tmp_path / "a")])
    outcome = tmp_path / "a" / "outcome.json"
    assert main(["verify-kkt", CFG3, str(outcome)]) == 0
    doc = _load(outcome)
    key = next(iter(doc["dual"]["theta"]))
    doc["dual"]["theta"][key] += 5.0
    tampered = tmp_path / "t.json"
    tampered.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["verify-kkt", CFG3, str(tampered)]) == 2
    out = capsys.readouterr().out
    assert "violated: stationarity.q" in out


def test_bilevel_exact_vs_enum(tmp_path):
    assert main(["solve-bilevel", CFG3, str(tmp_path / "x"), "--mode", "exact"]) == 0
    assert main(["solve-bilevel", CFG3, str(tmp_path / "e"), "--mode", "enum",
                 "--grid", "0,300,600"]) == 0
    x = _load(tmp_path / "x" / "solution.json")
    e = _load(tmp_path / "e" / "solution.json")
    assert x["welfare"] >= e["welfare"] * (1 - 1e-6)
    assert e["generated"] == 27


def test_enum_interrupt_and_resume(tmp_path):
    ck = str(tmp_path / "ck.txt")
    args = ["solve-bilevel", NORDIC, str(tmp_path / "n"), "--mode", "enum", "--grid",
            "0,9000", "--checkpoint", ck]
    assert main(args + ["--stop-after-blocks", "1"]) == 4
    assert main(args) == 0
    sol = _load(tmp_path / "n" / "solution.json")
    assert sol["generated"] == 1024
    assert main(["solve-bilevel", NORDIC, str(tmp_path / "m"), "--mode", "enum",
                 "--grid", "0,9000"]) == 0
    assert (tmp_path / "m" / "solution.json").read_bytes() == \
        (tmp_path / "n" / "solution.json").read_bytes()


def test_enum_needs_grid(tmp_path):
    assert main(["solve-bilevel", CFG3, str(tmp_path / "o"), "--mode", "enum"]) == 1
    assert main(["solve-bilevel", CFG3, str(tmp_path / "o"), "--mode", "enum",
                 "--grid", "5,6"]) == 1


def test_cluster(tmp_path):
    csv_path = str(io.packaged("nordic5_hourly.csv"))
    assert main(["cluster", csv_path, str(tmp_path / "k"), "--k", "3"]) == 1
    bases = []
    for s in io.load_hourly_csv(csv_path):
        if s.kind != "demand":
            bases += ["--basis", f"{s.node}:{s.kind}={max(s.values.max(), 1.0) * 1.25}"]
    assert main(["cluster", csv_path, str(tmp_path / "k"), "--k", "3"] + bases) == 0
    doc = _load(tmp_path / "k" / "clusters.json")
    assert sum(w["count"] for w in doc["weights"]) == 365
    assert sum(Fraction(w["fraction"]) for w in doc["weights"]) == 1


def test_sweep_table3(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", NORDIC, str(io.packaged("table3.design")), str(out)]) == 0
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 1 + 16
    assert rows[1][1] == "baseline"
    assert (out / "report_long.csv").exists() and (out / "manifest.json").exists()


def test_help_lists_formats(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for fmt in ("gridexpand-system/1", "gridexpand-design/1", "gridexpand-enum-checkpoint 1",
                "gridexpand-qp 1", "hour,<node>:<kind>"):
        assert fmt in text


def test_console_module_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gridexpand.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout


def test_packaged_name_resolution(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["solve-central", "illustrative_3node.cfg", "o"]) == 0
    assert main(["solve-central", "missing.cfg", "o"]) == 3
