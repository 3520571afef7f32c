import csv
import json

import numpy as np
import pytest

from bifh.cli import main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out


@pytest.fixture
def graph_chart(tmp_path):
    path = tmp_path / "graph.json"
    path.write_text(json.dumps({
        "components": ["u", "v", "0.1*(u^2-v^2)"],
        "domain": [[-0.5, 0.5], [-0.5, 0.5]],
        "grid": [33, 33],
        "name": "graph",
    }))
    return path


@pytest.mark.parametrize(
    "argv, code",
    [
        (["curve", "--k1", "0", "--f", "2*s+3"], 0),
        (["curve", "--k1", "0.6", "--k2", "0.8", "--space", "sphere"], 0),
        (["curve", "--k1", "1", "--k2", "1", "--c", "0"], 4),
        (["curve", "--k1", "1", "--k2", "1", "--c", "-1"], 4),
        (["curve", "--k1", "1", "--f", "cos(sqrt(5/2)*s)", "--range", "-0.5", "0.5"], 3),
        (["curve", "--k1", "1", "--f", "s-2"], 10),
        (["curve", "--k1", "1", "--f", "s+"], 10),
    ],
)
def test_curve_exit_codes(argv, code, capsys):
    assert _run(argv, capsys)[0] == code


def test_curve_report_and_files(tmp_path, capsys):
    code, out = _run(["curve", "--k1", "1", "--k2", "1", "--out", str(tmp_path)], capsys)
    assert code == 4
    report = json.loads(out.out)
    assert report["schema"] == "bifh/1"
    assert report["certificate"]["kind"] == "nonexistence"
    assert "k1²+k2²=0" in report["certificate"]["forced_relations"]
    assert json.loads((tmp_path / "curve.json").read_text(encoding="utf-8")) == report
    with open(tmp_path / "curve.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "eq1", "eq2", "eq3", "eq4", "coef1", "coef2", "coef3", "coef4"]
    assert len(rows) == 129


def test_curve_profile_csv(tmp_path, capsys):
    s = np.linspace(0, 1, 60)
    path = tmp_path / "profile.csv"
    np.savetxt(path, np.column_stack([s, 0.6 + 0 * s, 0.8 + 0 * s]), delimiter=",",
               header="s,k1,k2", comments="")
    code, out = _run(["curve", "--profile-csv", str(path), "--c", "1", "--n", "64"], capsys)
    assert code == 0
    assert json.loads(out.out)["verdict"] == "satisfied"


def test_curve_from_points(tmp_path, capsys):
    s = np.linspace(0, 3, 400)
    path = tmp_path / "circle.csv"
    np.savetxt(path, np.stack([np.cos(s), np.sin(s), 0 * s], -1), delimiter=",")
    code, out = _run(["curve", "--points", str(path), "--f", "1", "--tol", "1e-3"], capsys)
    assert code == 3
    assert json.loads(out.out)["sup_norms"][1] == pytest.approx(1.0, abs=1e-3)


def test_surface_command(graph_chart, tmp_path, capsys):
    code, out = _run(["surface", "--chart", str(graph_chart), "--f", "1+0.1*x", "--oracle",
                      "--out", str(tmp_path)], capsys)
    report = json.loads(out.out)
    assert code == 3
    assert report["mode"] == "general"
    assert all(entry["passed"] for entry in report["oracle"])
    header = (tmp_path / "surface.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["u", "v", "H", "normal"]
    assert "oracle_normal" in header


def test_surface_plane_satisfied(tmp_path, capsys):
    path = tmp_path / "plane.json"
    path.write_text(json.dumps({"components": ["u", "v", "0"], "domain": [[0, 1], [0, 1]], "grid": [17, 17]}))
    assert _run(["surface", "--chart", str(path), "--f", "1+0.1*x"], capsys)[0] == 0


def test_surface_errors(tmp_path, capsys):
    assert _run(["surface", "--chart", str(tmp_path / "missing.json")], capsys)[0] == 10
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(["surface", "--chart", str(bad)], capsys)[0] == 10
    degenerate = tmp_path / "deg.json"
    degenerate.write_text(json.dumps({"components": ["u", "u", "0"], "domain": [[0, 1], [0, 1]], "grid": [17, 17]}))
    code, out = _run(["surface", "--chart", str(degenerate)], capsys)
    assert code == 11
    assert "numerical error" in out.err


def test_thread_limit_validation(monkeypatch, capsys):
    monkeypatch.setenv("BIFH_THREADS", "zero")
    assert _run(["curve", "--k1", "0"], capsys)[0] == 10
    monkeypatch.setenv("BIFH_THREADS", "1")
    assert _run(["curve", "--k1", "0"], capsys)[0] == 0


def test_verify_curves(capsys):
    code, out = _run(["verify", "curves"], capsys)
    assert code == 0
    assert "FAIL" not in out.out
    assert out.out.strip().splitlines()[-1].endswith("checks passed")
