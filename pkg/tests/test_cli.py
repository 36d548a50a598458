import subprocess
import sys

import numpy as np
import pytest

from sedsim.cli import main
from sedsim.config import RunConfig, emit_config
from sedsim.integrator import IntegratorConfig, Trajectory
from sedsim.io import read_histogram, read_record
from sedsim.constants import PhysicalConstants
from sedsim.field import FrequencyGrid, build_field


def _write(tmp_path, **kw):
    base = dict(Z=1, N=100, seed=2, t_max=30.0, steps_per_orbit=800, sample_interval=1.0)
    base.update(kw)
    p = tmp_path / "run.toml"
    p.write_text(emit_config(RunConfig(**base)))
    return p


def test_run_success(tmp_path, capsys):
    cfg = _write(tmp_path)
    assert main(["run", str(cfg), "--output", str(tmp_path / "out")]) == 0
    assert "trajectory 0: completed" in capsys.readouterr().out
    rec = read_record(tmp_path / "out" / "traj_0000.csv")
    assert rec.status == "completed"


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("Z = 0\nN = 10\nseed = 1\n")
    assert main(["run", str(bad)]) == 2
    assert "Z" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_all_ionised_exit_3(tmp_path):
    cfg = _write(tmp_path, coupling=0.0, field_enabled=False, initial="circular", initial_R=40.0,
                 ionisation_dwell=10.0, ensemble_size=2)
    assert main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 3


def test_numerical_abort_exit_4(tmp_path):
    # guard radius larger than the perihelion forces an abort
    cfg = _write(tmp_path, coupling=0.0, field_enabled=False, initial="explicit", initial_R=2.0,
                 initial_eps=0.9, guard_radius=0.5)
    assert main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 4


def test_sample_self_test(tmp_path, capsys):
    assert main(["sample", "--n", "20000", "--output", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "mean R" in out and "FAIL" not in out
    h = read_histogram(tmp_path / "sample_R.csv")
    assert abs(np.sum(h["height"] * (h["right"] - h["left"])) - 1) < 1e-12


def test_field_check_small(capsys):
    code = main(["field-check", "--N", "10", "--seeds", "20", "--max-mode", "400",
                 "--cutoff-scale", "0.5", "--lags", "0", "1", "--origins", "40"])
    out = capsys.readouterr().out
    assert code in (0, 1) and out.count("C_") == 4


def test_field_check_fails_when_tolerance_is_impossible(capsys):
    code = main(["field-check", "--N", "10", "--seeds", "4", "--max-mode", "200",
                 "--cutoff-scale", "0.5", "--lags", "0", "--origins", "5", "--tolerance", "0"])
    assert code == 1


def test_analyze_and_resume(tmp_path, capsys):
    cfg = _write(tmp_path, t_max=60.0, ensemble_size=1)
    assert main(["run", str(cfg), "--output", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    assert main(["analyze", str(tmp_path / "o" / "traj_0000.csv"), "--output", str(tmp_path / "a")]) == 0
    assert "status=completed" in capsys.readouterr().out

    c = PhysicalConstants(Z=1)
    f = build_field(3, FrequencyGrid(100, 1500), c.cutoff_scale)
    tr = Trajectory(f, c, IntegratorConfig(steps_per_orbit=800), [2.0, 0, 0], [0, 0.7, 0])
    tr.run(20.0)
    ck = tmp_path / "ck.npz"
    tr.save_checkpoint(ck)
    out = tmp_path / "resumed.bin"
    assert main(["resume", str(ck), "--t-max", "40", "--output", str(out), "--format", "binary"]) == 0
    assert read_record(out).t[-1] >= 40.0


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "sedsim.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for verb in ("run", "sample", "field-check", "analyze", "resume"):
        assert verb in res.stdout
