import csv
import json
from importlib import resources

import pytest

from restoration.cli import main, validate_document

DATA = resources.files("restoration") / "data"
FEEDER13 = str(DATA / "ieee13_mg.feeder")
CASE1 = str(DATA / "ieee13_case1.event")

INFEASIBLE = """\
levels = 1
[linecodes]
id phases unit z
c a mile 0.1+0.1j
[buses]
id phases vmin vmax
s a 0.95 1.05
l a 1.10 1.15
[lines]
id from to code length
s-l s l c 1
[loads]
bus level pa qa
l 1 10 2
[sources]
id bus kind p_rate
G s diesel 50
"""


@pytest.fixture(scope="module")
def case1_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    out, ph, tr = d / "r.json", d / "v.csv", d / "t.csv"
    code = main(["solve", FEEDER13, CASE1, "-o", str(out), "--phasors", str(ph), "--trajectory", str(tr)])
    return code, json.loads(out.read_text()), list(csv.DictReader(ph.open())), list(csv.DictReader(tr.open()))


def test_solve_case1(case1_run):
    code, doc, phasors, traj = case1_run
    assert code == 0
    assert validate_document(doc) == []
    assert doc["summary"]["objective"] == 210.2
    plan = [p for p in doc["plans"] if p["status"] == "solved"][0]
    assert plan["iterations"] == 2 and plan["verdict"] == "verified_global"
    assert plan["dispatch"]["reference"] == "633"
    assert {r["bus"] for r in phasors} >= {"633", "675"}
    assert [int(r["round"]) for r in traj] == [0, 1, 2]
    assert float(traj[-1]["W_sdp"]) == pytest.approx(210.2, abs=1e-6)


def test_solve_infeasible_and_missing(tmp_path, capsys):
    f = tmp_path / "bad.feeder"
    f.write_text(INFEASIBLE)
    ev = tmp_path / "e.json"
    ev.write_text('{"faulted_lines": []}')
    assert main(["solve", str(f), str(ev), "-o", str(tmp_path / "r.json")]) == 2
    assert main(["solve", str(tmp_path / "missing.feeder"), str(ev)]) == 1
    assert "error" in capsys.readouterr().err


def test_settings_env(tmp_path, monkeypatch):
    s = tmp_path / "s.json"
    s.write_text(json.dumps({"engine": {"rank_threshold": 1e-3}, "solver": {"tol": 1e-7}, "model": {}}))
    monkeypatch.setenv("RESTORATION_SETTINGS", str(s))
    out = tmp_path / "r.json"
    assert main(["solve", FEEDER13, CASE1, "-o", str(out), "--no-timings"]) == 0
    s.write_text(json.dumps({"bogus": {}}))
    assert main(["solve", FEEDER13, CASE1, "-o", str(out)]) == 1


def test_weight_flag(tmp_path):
    out = tmp_path / "r.json"
    assert main(["solve", FEEDER13, CASE1, "-o", str(out), "--weights", "1000,100,1", "--no-timings"]) == 0
    assert json.loads(out.read_text())["summary"]["objective"] == 2101.0
    assert main(["solve", FEEDER13, CASE1, "--weights", "1,10"]) == 1


def test_sweep_deterministic(tmp_path):
    a, b, c = (tmp_path / f"{k}.json" for k in "abc")
    args = ["sweep", FEEDER13, "--scenarios", "3", "--seed", "11", "--no-timings", "--compare-milp"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert main(args + ["-o", str(c), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    doc = json.loads(a.read_text())
    assert validate_document(doc) == []
    assert [r["index"] for r in doc["records"]] == [0, 1, 2]
    agg = doc["aggregate"]
    assert sum(agg["iteration_histogram"].values()) == agg["solved_scenarios"]
    assert agg["milp"]["compared"] == agg["milp"]["same"] + agg["milp"]["different"]


def test_oracle_command(tmp_path):
    out = tmp_path / "o.json"
    assert main(["oracle", FEEDER13, CASE1, "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    isl = [i for i in doc["islands"] if i["objective"] is not None][0]
    assert isl["objective"] == 210.2 and isl["agree"] is True
    assert main(["oracle", FEEDER13, CASE1, "--max-loads", "2"]) == 1


def test_compare_command(tmp_path):
    out, fig = tmp_path / "c.json", tmp_path / "f.csv"
    assert main(["compare", FEEDER13, CASE1, "--islanded", "--fig7-csv", str(fig), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    isl = [i for i in doc["islands"] if i["sdp"]][0]
    assert isl["sdp"] == ["632", "645", "646", "675"]
    assert "not applicable" in isl["notes"]["misocp"]
    co = doc["coordination"]
    assert co["coordinated"] > co["islanded"]
    rows = list(csv.DictReader(fig.open()))
    assert [r["level"] for r in rows] == ["1", "2", "3"]


def test_validate_command(tmp_path):
    out = tmp_path / "v.json"
    assert main(["validate", FEEDER13, "--event", CASE1, "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["ok"] and doc["weights"]["condition2"]
    assert main(["validate", "--result", str(out)]) == 0
    broken = tmp_path / "b.json"
    broken.write_text(json.dumps({"schema_version": "1", "kind": "solve"}))
    assert main(["validate", "--result", str(broken)]) == 1
