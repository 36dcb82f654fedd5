from __future__ import annotations

import pandas as pd
import pytest

from src.cli import EXIT_ASSERTION, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main


def test_converge_single_mesh(tmp_path):
    code = main(["converge", "--N", "2", "--beta", "1", "--nu", "0.3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    table = pd.read_csv(tmp_path / "tbl_convergence.csv")
    assert len(table) == 1
    assert (tmp_path / "tbl_convergence_fits.csv").exists()


def test_converge_output_is_reproducible(tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        argv = ["converge", "--N", "2,4", "--beta", "1,2", "--nu", "0.3", "--seed", "7", "--out", str(out)]
        main(argv)
        outputs.append(out)
    for table in ("tbl_convergence.csv", "tbl_convergence_fits.csv"):
        assert (outputs[0] / table).read_bytes() == (outputs[1] / table).read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["converge", "--nu", "0.6"],
        ["check", "--N", "0"],
        ["solve", "--no-such-flag"],
        ["solve", "--initial-pressure", "h1"],
        ["solve", "--log-level", "chatty"],
        [],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_solve_writes_steps(tmp_path, capsys):
    path = tmp_path / "steps.csv"
    code = main(["solve", "--N", "2", "--T", "0.125", "--dt", "0.125", "--out", str(path)])
    assert code == EXIT_OK
    steps = pd.read_csv(path)
    assert list(steps.columns) == ["step", "t", "iterations", "residual", "converged"]
    assert len(steps) == 1
    out = capsys.readouterr().out
    assert "relative error u_energy" in out
    assert "relative error p_l2" in out


def test_solve_out_directory(tmp_path):
    code = main(["solve", "--N", "2", "--T", "0.25", "--dt", "0.125", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert len(pd.read_csv(tmp_path / "solve_steps.csv")) == 2


def test_precond_not_converged(tmp_path):
    argv = [
        "precond", "--N", "2", "--beta", "2", "--nu", "0.3", "--dt", "0.1",
        "--steps", "1", "--maxit", "1", "--out", str(tmp_path),
    ]
    assert main(argv) == EXIT_SOLVER
    table = pd.read_csv(tmp_path / "tbl_preconditioning.csv")
    assert not table["converged"].any()


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as info:
        main(["precond", "--help"])
    assert info.value.code == 0
    assert "--steps" in capsys.readouterr().out


@pytest.mark.slow
def test_check_passes_by_default(tmp_path):
    assert main(["check", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "tbl_infsup.csv").exists()


@pytest.mark.slow
def test_check_flags_small_penalty(tmp_path):
    assert main(["check", "--gamma", "0.01", "--out", str(tmp_path)]) == EXIT_ASSERTION
