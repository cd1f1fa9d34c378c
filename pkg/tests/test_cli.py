"""End-to-end command-line runs: artifacts, exit codes, error paths."""

import json
import math

import numpy as np
import pytest

from cmlab.cli import main
from cmlab.grids import TAU, TorusChart
from cmlab.io import read_field, read_report


def run_cli(argv):
    return main(argv)


def test_solve_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli(["solve", "--out", str(out), "--grid", "64"])
    assert code == 0
    assert "ok" in capsys.readouterr().out
    rep = read_report(out / "report.json")
    assert rep["command"] == "solve"
    assert rep["grid"] == 64
    assert rep["chi"] == -0.5
    assert rep["area"] == pytest.approx(math.pi, rel=1e-2)
    assert rep["gbDefect"] < 1e-9
    u = read_field(out / "u.cmlgrid")
    v = read_field(out / "v.cmlgrid")
    assert u.chart == TorusChart() and u.n == 64
    assert v.chart == TorusChart() and v.n == 64
    assert np.isfinite(u.values).all()
    # u = S + v, and S has spikes at the atom that v does not
    assert float(np.abs(u.values - v.values).max()) > 1.0
    with open(out / "report.json", "rb") as fh:
        json.loads(fh.read())  # canonical output is plain JSON


def test_solve_with_config_and_uniqueness(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[run]\ngrid = 64\n\n[solve]\n"
                   "atoms = 0.3,0.7\nbetas = -0.5\nuniqueness_trials = 2\n")
    out = tmp_path / "out"
    code = run_cli(["solve", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    rep = read_report(out / "report.json")
    assert rep["uniqueness"]["trials"] == 2
    assert rep["uniqueness"]["maxPairwiseSup"] < 1e-8


def test_infeasible_problem_exits_1(tmp_path, capsys):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[solve]\nbetas = 0.5\n")
    code = run_cli(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"),
                    "--grid", "64"])
    assert code == 1
    err = capsys.readouterr().err
    assert "chi" in err


def test_config_errors_exit_1(tmp_path, capsys):
    bad_key = tmp_path / "bad.ini"
    bad_key.write_text("[solve]\nbogus = 1\n")
    assert run_cli(["solve", "--config", str(bad_key),
                    "--out", str(tmp_path / "o")]) == 1
    assert "unknown keys" in capsys.readouterr().err

    bad_sec = tmp_path / "sec.ini"
    bad_sec.write_text("[nonsense]\nx = 1\n")
    assert run_cli(["solve", "--config", str(bad_sec),
                    "--out", str(tmp_path / "o")]) == 1

    assert run_cli(["solve", "--config", str(tmp_path / "missing.ini"),
                    "--out", str(tmp_path / "o")]) == 1
    assert run_cli(["solve", "--grid", "100", "--out", str(tmp_path / "o")]) == 1
    capsys.readouterr()


def test_continue_cusp_run(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[continue-cusp]\nk_max = 3\n")
    out = tmp_path / "out"
    code = run_cli(["continue-cusp", "--config", str(cfg), "--out", str(out),
                    "--grid", "64"])
    assert code == 0
    rep = read_report(out / "report.json")
    assert len(rep["stages"]) == 3
    areas = [s["area"] for s in rep["stages"]]
    assert areas[0] < areas[1] < areas[2]
    for k, s in enumerate(rep["stages"], start=1):
        assert s["k"] == k
        assert s["area"] == pytest.approx(TAU * (1 - 2.0 ** -k), rel=1e-2)
    csv = (out / "stages.csv").read_text().splitlines()
    assert csv[0] == "stage,area,gbDefect"
    assert len(csv) == 4
    u = read_field(out / "u_final.cmlgrid")
    assert u.n == 64


def test_scan_clean_solution(tmp_path):
    out = tmp_path / "out"
    code = run_cli(["scan", "--out", str(out), "--grid", "64"])
    assert code == 0
    rep = read_report(out / "report.json")
    assert rep["flags"] == []
    assert rep["radii"] == [1.0 / 16.0, 1.0 / 32.0]
    assert rep["maxLocalMass"] < 1.0


def test_three_circle_exit_codes(tmp_path):
    out = tmp_path / "out"
    assert run_cli(["three-circle", "--out", str(out)]) == 0
    rep = read_report(out / "report.json")
    assert rep["hypothesisOk"] and rep["decayOk"]
    assert rep["closedForm"] is not None

    cfg = tmp_path / "flat.ini"
    cfg.write_text("[three-circle]\nb = 0.0\n")
    out2 = tmp_path / "out2"
    assert run_cli(["three-circle", "--config", str(cfg),
                    "--out", str(out2)]) == 2
    rep2 = read_report(out2 / "report.json")
    assert not rep2["hypothesisOk"]

    cfg3 = tmp_path / "fix.ini"
    cfg3.write_text("[three-circle]\nfixture = linear-cylinder\n")
    out3 = tmp_path / "out3"
    assert run_cli(["three-circle", "--config", str(cfg3),
                    "--out", str(out3)]) == 0
    assert read_report(out3 / "report.json")["fixture"] == "linear-cylinder"


def test_neck_flat_fixture_violation(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli(["neck", "--out", str(out)])
    assert code == 2
    assert "violation" in capsys.readouterr().out
    rep = read_report(out / "report.json")
    assert rep["fixture"] == "flat-neck"
    assert rep["hypothesisViolation"]
    assert rep["total"] == pytest.approx(TAU, rel=1e-8)
    csv = (out / "annuli.csv").read_text().splitlines()
    assert csv[0] == "index,r,area"
    assert len(csv) == len(rep["efold_annuli"]["radii"]) + 1


def test_neck_cusp_fixture_ok(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[neck]\nfixture = hyperbolic-cusp\nk = 5\n")
    out = tmp_path / "out"
    assert run_cli(["neck", "--config", str(cfg), "--out", str(out)]) == 0
    rep = read_report(out / "report.json")
    assert not rep["hypothesisViolation"]

    bad = tmp_path / "bad.ini"
    bad.write_text("[neck]\nfixture = hyperbolic-cusp\nk = 99\n")
    assert run_cli(["neck", "--config", str(bad),
                    "--out", str(tmp_path / "o2")]) == 1


def test_area_identity_exit_codes(tmp_path):
    out = tmp_path / "out"
    assert run_cli(["area-identity", "--out", str(out)]) == 0
    rep = read_report(out / "report.json")
    assert rep["fixture"] == "spherical-cap"
    assert abs(rep["defect"]) < 1e-6
    csv = (out / "window_areas.csv").read_text().splitlines()
    assert csv[0] == "k,area"
    assert len(csv) == len(rep["window_areas"]) + 1

    cfg = tmp_path / "flat.ini"
    cfg.write_text("[area-identity]\nfixture = flat-neck\n")
    out2 = tmp_path / "out2"
    assert run_cli(["area-identity", "--config", str(cfg),
                    "--out", str(out2)]) == 2
    rep2 = read_report(out2 / "report.json")
    assert rep2["violation"]
    assert rep2["defect"] == pytest.approx(TAU, abs=1e-6)


def test_report_reemission_is_byte_identical(tmp_path):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text("[continue-cusp]\nk_max = 2\n")
    first = tmp_path / "first"
    assert run_cli(["continue-cusp", "--config", str(cfg), "--out", str(first),
                    "--grid", "64"]) == 0
    second = tmp_path / "second"
    assert run_cli(["report", str(first / "report.json"),
                    "--out", str(second)]) == 0
    assert (first / "report.json").read_bytes() == \
        (second / "report.json").read_bytes()
    assert (first / "stages.csv").read_text() == \
        (second / "stages.csv").read_text()

    assert run_cli(["report", str(tmp_path / "nope.json"),
                    "--out", str(second)]) == 1
