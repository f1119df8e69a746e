"""Command-line entry point tests (in-process main calls)."""

import numpy as np
import pytest

from fleetlqr.cli import main
from fleetlqr.harness import read_regret_csv

TINY_CFG = """
fleet_kind = synthetic
H_values = 3
seeds = 1,2
tau1 = 6
k_fin = 3
N = 3
x_b = 25.0
K_b = 50.0
phi0_distance = 0.5
d_x = 2
d_u = 1
d_theta = 2
noise_var = 0.01
"""


def write_cfg(tmp_path, text=TINY_CFG):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def test_run_subcommand_writes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "results"
    rc = main(["run", "--config", cfg, "--out", str(out), "--workers", "1"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "backend:" in printed
    assert "H=3" in printed and "baseline (H=1)" in printed
    assert "regret.csv" in printed
    curves = {c.h: c for c in read_regret_csv(out / "regret.csv")}
    assert set(curves) == {3, 1}
    assert curves[3].n_seeds == 2
    assert (out / "diagnostics.csv").is_file()


def test_run_subcommand_deterministic_output_bytes(tmp_path):
    cfg = write_cfg(tmp_path)
    for name in ("a", "b"):
        rc = main(["run", "--config", cfg, "--out", str(tmp_path / name)])
        assert rc == 0
    assert (tmp_path / "a" / "regret.csv").read_bytes() == (
        tmp_path / "b" / "regret.csv"
    ).read_bytes()


def test_check_subcommand_passes(capsys):
    rc = main(["check"])
    printed = capsys.readouterr().out
    assert rc == 0
    assert "checks passed" in printed
    assert "FAIL" not in printed


def test_fleet_info_subcommand(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    rc = main(["fleet-info", "--config", cfg])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "H=3" in printed and "d_theta=2" in printed
    assert "excitation" in printed


def test_bench_subcommand(capsys):
    rc = main(["bench", "--steps", "2000", "--agents", "3", "--repeats", "1"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "active backend:" in printed
    assert "rollout" in printed and "dare" in printed


def test_bad_config_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("tau1 = -5\n")
    rc = main(["run", "--config", str(path)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err
    rc = main(["run", "--config", str(tmp_path / "missing.cfg")])
    assert rc == 2


def test_runtime_failure_exits_one(tmp_path, capsys):
    # d_theta larger than the lifted dimension: every cell fails to build
    path = tmp_path / "doomed.cfg"
    path.write_text(
        "fleet_kind = synthetic\nH_values = 8\nseeds = 1\n"
        "tau1 = 6\nk_fin = 2\nd_x = 1\nd_u = 1\nd_theta = 7\n"
        f"output_dir = {tmp_path / 'out'}\n"
    )
    rc = main(["run", "--config", str(path)])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand_rejected():
    with pytest.raises(SystemExit):
        main(["explode"])
