import json
import subprocess
import sys


from qsfrac import cli
from qsfrac.config import DEFAULTS_TOML


def run(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "qsfrac.cli", *map(str, args)], capture_output=True, text=True, cwd=cwd
    )


def test_print_defaults(capsys):
    assert cli.main(["--print-defaults"]) == 0
    assert capsys.readouterr().out == DEFAULTS_TOML


def test_bad_grid_exits_2_naming_invariant(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[grid]\ncells_x = 2\n")
    r = run("simulate", "--config", cfg, "--out", tmp_path)
    assert r.returncode == 2
    assert "GridSpec invariant violated" in r.stderr


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[solver]\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == 2
    assert "unknown top-level key" in capsys.readouterr().err


def test_solver_error_exits_1(tmp_path, capsys, monkeypatch):
    from qsfrac.errors import NoConvergenceError

    def boom(*a, **k):
        raise NoConvergenceError("elastic_solve_nonlinear: no start converged")

    monkeypatch.setattr(cli, "_evolve", boom)
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 1
    assert "NoConvergenceError" in capsys.readouterr().err


def test_simulate_writes_trajectory_and_oracle_line(tmp_path, capsys):
    assert cli.main(["simulate", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "max relative gap" in out
    data = json.loads((tmp_path / "trajectory_linear.json").read_text())
    assert data["schema_version"] == 1


def test_simulate_both_models(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        'model = "both"\n[grid]\nwidth = 6.0\ncells_x = 6\n[time]\npartition_level = 1\n'
        "[ladder]\nsample_times = [0.5, 1.0]\n[params]\nkappa = 0.1\n[output]\noracle_check = false\n"
    )
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory_linear.json").exists()
    assert (tmp_path / "trajectory_nonlinear.json").exists()


def test_oracle_subcommand(capsys):
    assert cli.main(["oracle"]) == 0
    assert "max relative gap 0.000e+00 <= 1e-6" in capsys.readouterr().out


def test_ladder_with_workers(tmp_path):
    cfg = tmp_path / "l.toml"
    cfg.write_text(
        "[grid]\nwidth = 6.0\ncells_x = 6\n[time]\npartition_level = 1\n"
        "[ladder]\nepsilons = [0.1, 0.05]\nsample_times = [0.5, 1.0]\n[params]\nkappa = 100.0\n"
    )
    r = run("ladder", "--config", cfg, "--out", tmp_path, "--workers", 2)
    assert r.returncode == 0, r.stderr
    lines = (tmp_path / "convergence_report.csv").read_text().splitlines()
    assert lines[0].startswith("# qsfrac convergence report schema_version=1")
    assert len(lines) == 2 + 4


def test_seed_override_and_bad_workers(tmp_path, capsys):
    assert cli.main(["simulate", "--workers", "0", "--out", str(tmp_path)]) == 2
    assert "--workers" in capsys.readouterr().err


def test_check_subset_writes_summary(tmp_path, capsys):
    assert cli.main(["check", "--only", "3", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "criterion  3 [PASS]" in out and "criterion  4 [PASS]" in out
    data = json.loads((tmp_path / "check_summary.json").read_text())
    assert data["all_passed"] and [c["id"] for c in data["criteria"]] == [3, 4]


def test_no_command_prints_help(capsys):
    assert cli.main([]) == 2
