import json
import subprocess
import sys

import pytest

from pde_arena.cli import main

SUBCOMMANDS = [[], ["gt"], ["gt", "build"], ["fem"], ["fem", "solve"], ["pinn"], ["pinn", "train"],
               ["compare"], ["report"]]


@pytest.mark.parametrize("words", SUBCOMMANDS, ids=lambda w: "-".join(w) or "top")
def test_help_exits_zero(words, capsys):
    assert main(words + ["--help"]) == 0
    assert "usage:" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["fem", "solve", "--problem", "poisson1d"],                       # missing --n
    ["fem", "solve", "--problem", "heat", "--n", "4"],
    ["pinn", "train", "--problem", "poisson1d", "--arch", "20,x,1"],
    ["pinn", "train", "--problem", "poisson1d", "--arch", "20,2"],     # wrong output width
    ["compare", "--problem", "poisson1d", "--repeats", "0"],
    ["fem", "solve", "--problem", "poisson1d", "--n", "0"],
])
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_usage_error_prints_full_help(capsys):
    main(["compare", "--method", "svm"])
    err = capsys.readouterr().err
    assert "--parallel" in err and "--accept-long-runtime" in err


def test_resource_guard(tmp_path, capsys):
    assert main(["fem", "solve", "--problem", "poisson3d", "--n", "1000", "--out", str(tmp_path)]) == 2
    assert "limit" in capsys.readouterr().err
    assert main(["pinn", "train", "--problem", "poisson1d", "--arch", "100000,1", "--out", str(tmp_path)]) == 2
    assert not any(tmp_path.iterdir())


def test_paper_scale_needs_acknowledgement(tmp_path, capsys):
    assert main(["fem", "solve", "--problem", "poisson1d", "--n", "8", "--scale", "paper",
                 "--out", str(tmp_path)]) == 2
    assert "--accept-long-runtime" in capsys.readouterr().err
    assert main(["fem", "solve", "--problem", "poisson1d", "--n", "8", "--scale", "paper",
                 "--accept-long-runtime", "--out", str(tmp_path)]) == 0


def test_fem_solve_and_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["fem", "solve", "--problem", "poisson2d", "--n", "16", "--out", str(out)]) == 0
    recs = json.loads((out / "records.json").read_text())
    assert len(recs) == 1 and recs[0]["config"] == "n=16" and recs[0]["status"] == "ok"
    again = tmp_path / "again"
    assert main(["report", "--in", str(out / "records.json"), "--out", str(again), "--format", "csv"]) == 0
    assert (again / "records.csv").exists() and (again / "pareto.csv").exists()
    assert not (again / "records.json").exists()
    assert main(["report", "--in", str(tmp_path / "missing.json")]) == 2


def test_fem_solve_writes_trajectory(tmp_path):
    assert main(["fem", "solve", "--problem", "allen_cahn1d", "--n", "32", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "allen_cahn1d_n32_trajectory.jsonl").read_text().splitlines()
    assert len(lines) == 5


def test_pinn_train_writes_artifacts(tmp_path, monkeypatch):
    from dataclasses import replace

    from pde_arena import cli
    from pde_arena.problems import run_plan

    def short(pid, scale="desk"):
        return replace(run_plan(pid, scale), adam_epochs=20, lbfgs_max_iter=5)

    monkeypatch.setattr(cli, "run_plan", short)
    assert main(["pinn", "train", "--problem", "poisson1d", "--arch", "5,1", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    stem = "poisson1d_5-1_seed3"
    ckpt = json.loads((tmp_path / f"{stem}.ckpt.json").read_text())
    assert ckpt["arch"] == [5, 1] and ckpt["seed"] == 3
    assert (tmp_path / f"{stem}.log.jsonl").read_text().strip()
    rec = json.loads((tmp_path / "records.json").read_text())[0]
    assert rec["method"] == "pinn" and rec["config"] == "[5,1]" and rec["details"]["adam_epochs"] == 20


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pde_arena.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "compare" in proc.stdout
