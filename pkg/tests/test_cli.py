import csv

import numpy as np
import pytest

from platefem.cli import main


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_seconds(path):
    """CSV content with the wall-time column removed (it is not reproducible)."""
    lines = []
    with open(path) as fh:
        for line in fh:
            lines.append(",".join(line.rstrip("\n").split(",")[:-1]))
    return "\n".join(lines)


def test_missing_problem_exits_1(capsys):
    assert main([]) == 1
    err = capsys.readouterr().err
    assert "usage" in err


def test_bad_theta_exits_1(capsys):
    assert main(["--problem", "example_2", "--theta", "1.5", "--levels", "2"]) == 1


def test_small_adaptive_run(tmp_path):
    out = tmp_path / "run"
    rc = main(["--problem", "example_2", "--mode", "adaptive", "--theta", "0.25",
               "--levels", "3", "--out", str(out), "--emit-meshes"])
    assert rc == 0
    rows = read_csv(out / "convergence.csv")
    assert len(rows) == 4  # levels 0..3
    assert list(rows[0].keys()) == ["level", "ndof", "ntri", "Q_h", "e_goal", "eta_h",
                                    "eta_tilde", "eta_nc", "eta_abs", "eta_res",
                                    "eff_abs", "eff_res", "seconds"]
    # last level goal error below the first
    assert float(rows[-1]["e_goal"]) < float(rows[0]["e_goal"])
    assert (out / "rates.txt").exists()
    for j in range(4):
        assert (out / f"mesh_level_{j}.txt").exists()
    # plot data rows match the CSV bit for bit
    for fname, col in [("err_vs_ndof.dat", "e_goal"),
                       ("est_abs_vs_ndof.dat", "eta_abs")]:
        lines = (out / fname).read_text().strip().splitlines()
        assert len(lines) == len(rows)
        for line, row in zip(lines, rows):
            nd, val = line.split()
            assert nd == row["ndof"]
            assert float(val) == float(row[col])


def test_deterministic_rerun(tmp_path):
    args = ["--problem", "example_2", "--mode", "adaptive", "--theta", "0.3",
            "--levels", "3"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert strip_seconds(out1 / "convergence.csv") == strip_seconds(out2 / "convergence.csv")
    for f in ("err_vs_ndof.dat", "est_abs_vs_ndof.dat", "est_res_vs_ndof.dat"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()
