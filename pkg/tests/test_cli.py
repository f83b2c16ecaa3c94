import csv
import json
import subprocess
import sys

import pytest

from freqstokes.cli import (ALPHA_GRID, EXIT_CONFIG, EXIT_MESH, EXIT_NOT_CONVERGED, EXIT_OK,
                            eval_number, main)
from freqstokes.mesh import generate_pipe, read_mesh, write_mesh


@pytest.fixture(scope="module")
def pipe_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "pipe.json"
    write_mesh(generate_pipe(1.0, 6.0, 3, 6, 10), path)
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate_pipe_from_target(tmp_path, capsys):
    out = tmp_path / "m.json"
    rc = main(["generate", "pipe", "--radius", "1", "--length", "15",
               "--target-elements", "24000", "-o", str(out)])
    assert rc == EXIT_OK
    stats = json.loads(capsys.readouterr().out)
    assert abs(stats["n_elements"] - 24000) / 24000 < 0.05
    assert read_mesh(out).n_elements == stats["n_elements"]


def test_generate_channel(tmp_path):
    out = tmp_path / "c.json"
    assert main(["generate", "channel", "--ny", "4", "--nx", "40", "-o", str(out)]) == EXIT_OK
    assert read_mesh(out).n_nodes == 205


def test_missing_required_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "pipe", "--length", "1", "-o", str(tmp_path / "x.json")])
    assert exc.value.code != 0


def test_pipe_without_counts_is_config_error(tmp_path):
    rc = main(["generate", "pipe", "--radius", "1", "--length", "1", "-o", str(tmp_path / "x")])
    assert rc == EXIT_CONFIG


def test_solve_steady(tmp_path, pipe_file):
    rc = main(["solve", "--mesh", str(pipe_file), "--alpha", "0", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["solver"]["converged"]
    assert report["alpha"] == 0.0
    assert report["mass_imbalance"] < 1e-2
    assert "timings" in report
    assert (tmp_path / "solution.vtk").read_text().startswith("# vtk DataFile Version 3.0")
    assert _rows(tmp_path / "profile.csv")


def test_solve_reproducible_outputs_identical(tmp_path, pipe_file):
    for name in ("a", "b"):
        assert main(["solve", "--mesh", str(pipe_file), "--alpha", "4", "--reproducible",
                     "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("solution.vtk", "profile.csv", "report.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "timings" not in json.loads((tmp_path / "a" / "report.json").read_text())


def test_solve_with_case_file(tmp_path, pipe_file):
    case = {"rho": 1.0, "mu": 1.0, "omega": 2.0, "max_iterations": 3, "bcs": [
        {"patch": "inlet", "kind": "neumann", "real": [0, 0, 1], "imag": [0, 0, 0]},
        {"patch": "wall", "kind": "dirichlet", "real": [0, 0, 0], "imag": [0, 0, 0]}]}
    (tmp_path / "case.json").write_text(json.dumps(case))
    rc = main(["solve", "--mesh", str(pipe_file), "--case", str(tmp_path / "case.json"),
               "--out", str(tmp_path / "run")])
    assert rc == EXIT_NOT_CONVERGED


def test_corrupt_mesh_exit_code(tmp_path, pipe_file, capsys):
    doc = json.loads(pipe_file.read_text())
    doc["elements"][5][1] = -3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    rc = main(["solve", "--mesh", str(bad), "--out", str(tmp_path / "r")])
    assert rc == EXIT_MESH
    assert "elements[5]" in capsys.readouterr().err


def test_bad_case_exit_code(tmp_path, pipe_file, capsys):
    (tmp_path / "case.json").write_text(json.dumps({"rho": -1, "mu": 1, "omega": 0}))
    rc = main(["solve", "--mesh", str(pipe_file), "--case", str(tmp_path / "case.json")])
    assert rc == EXIT_CONFIG
    assert "rho" in capsys.readouterr().err


def test_verify_default_grid(tmp_path):
    mesh = tmp_path / "m.json"
    write_mesh(generate_pipe(1.0, 4.0, 2, 6, 6), mesh)
    out = tmp_path / "v.csv"
    assert main(["verify", "--mesh", str(mesh), "-o", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == len(ALPHA_GRID) == 11
    assert list(rows[0]) == ["alpha", "error_norm", "q_r_star", "q_i_star", "q_ref_r_star",
                             "q_ref_i_star", "n_itr"]
    assert float(rows[0]["q_ref_r_star"]) == 1.0
    assert float(rows[-1]["alpha"]) == pytest.approx(32.0)


def test_sweep_tolerance(tmp_path, pipe_file):
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--mesh", str(pipe_file), "--parameter", "tolerance",
               "--values", "1e-1,1e-2,1e-3", "--alpha", "2", "-o", str(out)])
    assert rc == EXIT_OK
    rows = _rows(out)
    assert [float(r["value"]) for r in rows] == [0.1, 0.01, 0.001]
    assert all(float(r["alpha"]) == pytest.approx(2.0) for r in rows)


def test_sweep_c_stab_power_syntax(tmp_path, pipe_file):
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--mesh", str(pipe_file), "--parameter", "c_stab",
               "--values", "2^-7,2^-5", "--alpha", "1", "-o", str(out)])
    assert rc == EXIT_OK
    assert float(_rows(out)[0]["value"]) == 2.0**-7


def test_sweep_mesh_resolution(tmp_path):
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--parameter", "mesh_resolution", "--values", "400,1200",
               "--length", "3", "-o", str(out)])
    assert rc == EXIT_OK
    errs = [float(r["error_norm"]) for r in _rows(out)]
    assert errs[1] < errs[0]


@pytest.mark.parametrize("values", ["", "1,1", "3,1,2"])
def test_sweep_rejects_bad_values(tmp_path, pipe_file, values):
    rc = main(["sweep", "--mesh", str(pipe_file), "--parameter", "alpha", "--values", values,
               "-o", str(tmp_path / "s.csv")])
    assert rc == EXIT_CONFIG


def test_womersley_table(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["womersley-table", "--alpha", "0", "--points", "3", "-o", str(out)]) == 0
    rows = _rows(out)
    assert float(rows[0]["u_r_star"]) == 1.0 and float(rows[-1]["u_r_star"]) == 0.0


def test_eval_number():
    assert eval_number("2^-5") == 2.0**-5
    assert eval_number("sqrt(2)") == 2**0.5
    assert eval_number(" 1e-3 ") == 1e-3
    with pytest.raises(ValueError):
        eval_number("two")


def test_console_entry_point(tmp_path):
    out = tmp_path / "w.csv"
    proc = subprocess.run([sys.executable, "-m", "freqstokes.cli", "womersley-table",
                           "--alpha", "2", "-o", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(_rows(out)) == 51
