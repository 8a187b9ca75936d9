import numpy as np

from pdectrl.cli import main


def test_train_cli_and_byte_determinism(tmp_path, capsys):
    argv = ["train", "--domain", "pde-model", "--variant", "descriptor", "--k", "16",
            "--d", "4", "--episodes", "3", "--runs", "1", "--seed", "11",
            "--out", str(tmp_path / "a")]
    assert main(argv) == 0
    argv[-1] = str(tmp_path / "b")
    assert main(argv) == 0
    a = (tmp_path / "a" / "runs.csv").read_bytes()
    b = (tmp_path / "b" / "runs.csv").read_bytes()
    assert a == b
    out = capsys.readouterr().out
    assert "trained descriptor" in out


def test_sweep_cli(tmp_path, capsys):
    argv = ["sweep", "--domain", "pde-model", "--variant", "ddpg", "--k", "16", "--d", "4",
            "--episodes", "2", "--runs", "1", "--seed", "3",
            "--actor-lrs", "0.0001,0.00001", "--multipliers", "1,10",
            "--out", str(tmp_path / "sw")]
    assert main(argv) == 0
    assert (tmp_path / "sw" / "sweep_summary.csv").exists()
    out = capsys.readouterr().out
    assert "best cell" in out


def test_gradcheck_cli(capsys):
    assert main(["gradcheck", "--configs", "6", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert "composite[descriptor]" in out


def test_plot_cli(tmp_path):
    argv = ["train", "--domain", "pde-model", "--variant", "separate", "--k", "16",
            "--d", "4", "--episodes", "2", "--runs", "1", "--seed", "2",
            "--out", str(tmp_path / "t")]
    assert main(argv) == 0
    fig = tmp_path / "fig.svg"
    assert main(["plot", "--in", str(tmp_path / "t"), "--out", str(fig)]) == 0
    assert fig.exists()
    assert b"<svg" in fig.read_bytes()


def test_plot_cli_empty_dir_fails(tmp_path, capsys):
    assert main(["plot", "--in", str(tmp_path), "--out", str(tmp_path / "x.svg")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_heat_invader_smoke(tmp_path):
    argv = ["train", "--domain", "heat-invader", "--variant", "descriptor", "--k", "25",
            "--episodes", "1", "--runs", "1", "--seed", "4",
            "--out", str(tmp_path / "hi")]
    assert main(argv) == 0
    assert (tmp_path / "hi" / "runs.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    argv = ["train", "--k", "7", "--d", "4", "--episodes", "1", "--runs", "1",
            "--out", str(tmp_path / "x")]  # k=7 not a square for pde model
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err
