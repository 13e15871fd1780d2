import json
from pathlib import Path

import jsonschema
import pytest

from fiskit import scenario as scn
from fiskit.cli import main
from fiskit.oracles import ORACLES

ROOT = Path(__file__).resolve().parents[1]
SCHEMA = json.loads((ROOT / "docs" / "report.schema.json").read_text())
BUNDLED = sorted((ROOT / "src" / "fiskit" / "scenarios").glob("*.scn"))

SMALL = """\
format: fiskit/1
name: small
seed: 3
chart: {dim: 2, resolution: 16}
structure:
  V: [["1/2", "i/2"]]
  P: [["1/2", "-i/2"]]
tasks:
  - task: check-structure
    expect: {passed: true}
  - task: solve
    q: 1
    f: ["exp(i*(x1 + x2))"]
    oracle: ["ORACLE"]
    expect: {oracle_tol: 1.0e-9}
"""


def _write(tmp_path, text, name="s.scn"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_bundled_scenarios_pass(path, capsys):
    code, out, err = _run(["run", str(path)], capsys)
    assert code == 0, err
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    assert report["passed"] and all(t["status"] in ("pass", "done") for t in report["tasks"])
    assert all("seconds" not in t for t in report["tasks"])


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_reports_byte_identical(path, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["run", str(path), "--out", str(a)]) == 0
    assert main(["run", str(path), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_bundled_lookup():
    assert scn.bundled("t2_dolbeault.scn").exists()
    with pytest.raises(FileNotFoundError):
        scn.bundled("nope.scn")


def test_assertion_failure_exit_1(tmp_path, capsys):
    p = _write(tmp_path, SMALL.replace("ORACLE", "(1 - i)*exp(i*(x1 + x2))"))
    code, out, err = _run(["run", str(p)], capsys)
    assert code == 1
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    assert [t["status"] for t in report["tasks"]] == ["pass", "fail"]
    assert report["tasks"][1]["failures"] and "[ fail]" in err


def test_oracle_match_exit_0(tmp_path, capsys):
    p = _write(tmp_path, SMALL.replace("ORACLE", "(1 + i)*exp(i*(x1 + x2))"))
    assert _run(["run", str(p)], capsys)[0] == 0


def test_task_error_is_reported(tmp_path, capsys):
    text = SMALL.replace("ORACLE", "0").replace("    expect: {oracle_tol: 1.0e-9}\n", "") + (
        "  - task: convexity\n    q: 1\n    phi: \"log(x1 - 10)\"\n")
    code, out, _ = _run(["run", str(_write(tmp_path, text))], capsys)
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    last = report["tasks"][-1]
    assert code == 1 and last["status"] == "error"
    assert last["error"]["type"] == "DomainError"
    assert "(0.0, 0.0)" in last["error"]["message"]


@pytest.mark.parametrize("text, where, needle", [
    ("format: fiskit/1\ntasks: [\n", (3, 1), "expected"),
    (SMALL.replace('"i/2"]]\n  P', '"i/2 +"]]\n  P'), (6, 15), "structure.V[0][1]"),
    (SMALL.replace("task: check-structure", "task: frobnicate"), (9, 11), "unknown task"),
    (SMALL.replace("resolution: 16", "resolution: two"), (4, 29), "chart.resolution"),
    (SMALL.replace("format: fiskit/1", "format: fiskit/9"), (1, 9), "format"),
    (SMALL.replace('["exp(i*(x1 + x2))"]', '["exp(i*(x1 + y))"]'), (13, 9), "unknown identifier"),
])
def test_malformed_exit_2(tmp_path, capsys, text, where, needle):
    p = _write(tmp_path, text)
    for cmd in ("run", "check"):
        code, out, err = _run([cmd, str(p)], capsys)
        assert code == 2 and out == ""
        assert f"{p}:{where[0]}:{where[1]}:" in err and needle in err


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = _run(["run", str(tmp_path / "absent.scn")], capsys)
    assert code == 2 and "cannot read" in err


def test_check_ok(capsys):
    code, out, _ = _run(["check", str(scn.bundled("t2_dolbeault.scn"))], capsys)
    assert code == 0 and "ok (5 tasks)" in out


def test_oracle_command(capsys):
    code, out, _ = _run(["oracle"], capsys)
    assert code == 0 and set(json.loads(out)["oracles"]) == set(ORACLES) - {"list"}
    code, out, _ = _run(["oracle", "leafwise"], capsys)
    assert code == 0 and json.loads(out) == ORACLES["leafwise"]()
    code, _, err = _run(["oracle", "nope"], capsys)
    assert code == 2 and "unknown oracle" in err


def test_overrides_and_timings(tmp_path, capsys):
    p = str(scn.bundled("t2_dolbeault.scn"))
    code, out, _ = _run(["run", p, "--seed", "5", "--resolution", "24", "--timings"], capsys)
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    assert code == 0 and report["seed"] == 5 and report["resolution"] == 24
    assert report["structure"]["shape"] == [24, 24]
    assert all(t["seconds"] >= 0 for t in report["tasks"])


def test_seed_changes_sampling(capsys):
    p = str(scn.bundled("t2_dolbeault.scn"))
    a = json.loads(_run(["run", p], capsys)[1])
    b = json.loads(_run(["run", p, "--seed", "99"], capsys)[1])
    assert a["tasks"][3]["results"] != b["tasks"][3]["results"]


def test_dump_matrices(tmp_path, capsys):
    d = tmp_path / "mm"
    code = _run(["run", str(scn.bundled("t2_dolbeault.scn")), "--dump-matrices", str(d)], capsys)[0]
    assert code == 0
    files = sorted(d.rglob("*.mtx"))
    assert files and files[0].read_text().startswith("%%MatrixMarket")


def test_loads_and_run_api():
    sc = scn.loads(SMALL.replace("ORACLE", "(1 + i)*exp(i*(x1 + x2))"), "inline")
    assert sc.name == "small"
    r1, r2 = scn.run(sc), scn.run(sc)
    assert r1 == r2 and r1["passed"]
    with pytest.raises(scn.ScenarioError) as ei:
        scn.loads("- 1\n- 2\n", "inline")
    assert ei.value.line == 1
