import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from bangbang_heat import cli
from bangbang_heat.pde import BlowUpError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_main(*argv):
    return cli.main([str(a) for a in argv])


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


SIM = """[problem]
n = 19
dt = 1e-2
nonlinearity = cubic
y0_modes = (1.0,)

[task]
kind = simulate
T = 0.1
"""


def test_simulate_and_verify(tmp_path, capsys):
    cfg = write(tmp_path, "sim.ini", SIM)
    assert run_main("simulate", cfg, "--out", tmp_path / "o") == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    names = {f["name"] for f in man["files"]}
    assert {"trajectory.csv", "trajectory.npz", "summary.json"} <= names
    assert all((tmp_path / "o" / n).stat().st_size > 0 for n in names)
    assert man["version"] and man["stages"]["simulate"] >= 0
    header = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x,value"
    capsys.readouterr()
    assert run_main("verify", tmp_path / "o" / "manifest.json") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_run_subcommand_uses_config_kind(tmp_path):
    cfg = write(tmp_path, "sim.ini", SIM)
    assert run_main("run", cfg, "--out", tmp_path / "o") == 0


def test_exit_config_error(tmp_path):
    cfg = write(tmp_path, "bad.ini", SIM.replace("n = 19", "n = 19\nq = 1"))
    assert run_main("simulate", cfg, "--out", tmp_path / "o") == cli.EXIT_CONFIG
    assert run_main("simulate", tmp_path / "missing.ini") == cli.EXIT_CONFIG
    assert run_main("simulate", cfg, "--set", "nonsense") == cli.EXIT_CONFIG


def test_exit_solver_failure(tmp_path):
    text = SIM.replace("y0_modes = (1.0,)", "y0_modes = (200.0,)\nomega = (0.3, 0.7)").replace("dt = 1e-2", "dt = 1e-3")
    cfg = write(tmp_path, "c.ini", text.replace("T = 0.1", "T = 0.02"))
    out = tmp_path / "o"
    assert run_main("null-control", cfg, "--out", out) == cli.EXIT_SOLVER
    assert (out / "manifest.json.partial").exists() and not (out / "manifest.json").exists()


def test_exit_infeasible(tmp_path):
    text = SIM.replace("nonlinearity = cubic", "nonlinearity = zero\nomega = (0.3, 0.7)\nM = 1e-9")
    text = text.replace("dt = 1e-2", "dt = 2e-3").replace("T = 0.1", "t_hi = 0.004")
    cfg = write(tmp_path, "i.ini", text)
    assert run_main("time-optimal", cfg, "--out", tmp_path / "o") == cli.EXIT_INFEASIBLE
    man = json.loads((tmp_path / "o" / "manifest.json.partial").read_text())
    assert man["exit_code"] == 4 and "BracketError" in man["error"]


def test_exit_blow_up_and_partial_files(tmp_path, monkeypatch):
    cfg = write(tmp_path, "sim.ini", SIM)
    real = cli.solve_semilinear
    calls = []

    def exploding(*args, **kwargs):
        calls.append(1)
        raise BlowUpError("injected", step=3)

    # first run writes some files, the second fails mid-task after a write
    assert run_main("simulate", cfg, "--out", tmp_path / "o") == 0
    monkeypatch.setattr(cli, "solve_semilinear", exploding)
    assert run_main("simulate", cfg, "--out", tmp_path / "p") == cli.EXIT_BLOWUP
    assert calls and (tmp_path / "p" / "manifest.json.partial").exists()
    monkeypatch.setattr(cli, "solve_semilinear", real)

    def write_then_fail(cfg_, w, man):
        w.csv("early.csv", ("a",), [(1.0,)])
        raise BlowUpError("injected after a write", step=1)

    monkeypatch.setitem(cli.TASK_RUNNERS, "simulate", write_then_fail)
    assert run_main("simulate", cfg, "--out", tmp_path / "q") == cli.EXIT_BLOWUP
    assert (tmp_path / "q" / "early.csv.partial").exists() and not (tmp_path / "q" / "early.csv").exists()


def test_seed_override_changes_manifest(tmp_path):
    cfg = write(tmp_path, "sim.ini", SIM)
    run_main("simulate", cfg, "--out", tmp_path / "o", "--seed", "17")
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["config"]["run"]["seed"] == 17


@pytest.fixture(scope="module")
def time_optimal_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("topt")
    assert run_main("time-optimal", CONFIGS / "time_optimal.ini", "--out", out) == 0
    return out


def test_time_optimal_outputs(time_optimal_run):
    names = {f["name"] for f in json.loads((time_optimal_run / "manifest.json").read_text())["files"]}
    assert {"n_curve.csv", "saturation.csv", "summary.json", "control.npz"} <= names
    assert cli.main(["verify", str(time_optimal_run / "manifest.json")]) == 0


def _copy(src, dst):
    shutil.copytree(src, dst)
    return dst


def test_verify_scaled_control_fails(time_optimal_run, tmp_path):
    d = _copy(time_optimal_run, tmp_path / "scaled")
    with np.load(d / "control.npz") as z:
        data = {k: z[k] for k in z.files}
    data["values"] = data["values"] * 1.2
    with open(d / "control.npz", "wb") as fh:
        np.savez(fh, **data)
    results = dict((c, ok) for c, ok, _ in cli.verify(d / "manifest.json"))
    assert results["norm bound"] is False
    assert cli.main(["verify", str(d / "manifest.json")]) == cli.EXIT_VERIFY_FAILED


def test_verify_truncated_file_fails(time_optimal_run, tmp_path):
    d = _copy(time_optimal_run, tmp_path / "trunc")
    lines = (d / "n_curve.csv").read_text().splitlines(keepends=True)
    (d / "n_curve.csv").write_text("".join(lines[:-2]))
    results = dict((c, ok) for c, ok, _ in cli.verify(d / "manifest.json"))
    assert results["file n_curve.csv"] is False


def test_verify_truncated_trajectory_fails(tmp_path):
    cfg = write(tmp_path, "sim.ini", SIM)
    run_main("simulate", cfg, "--out", tmp_path / "o")
    p = tmp_path / "o" / "trajectory.npz"
    p.write_bytes(p.read_bytes()[: p.stat().st_size // 2])
    results = cli.verify(tmp_path / "o" / "manifest.json")
    failed = {c for c, ok, _ in results if not ok}
    assert "file trajectory.npz" in failed and "trajectory replay" in failed


def test_verify_missing_manifest(tmp_path):
    assert cli.main(["verify", str(tmp_path / "nope.json")]) == cli.EXIT_VERIFY_FAILED


def test_improve_from_control_file(time_optimal_run, tmp_path):
    # a control from a larger horizon carries slack and is shortened
    from bangbang_heat import io as bio
    from bangbang_heat.control import min_norm_control_linear
    from bangbang_heat.mesh import Grid1D, RegionMask, TimeGrid

    g = Grid1D(49)
    om = RegionMask(g, (0.3, 0.7))
    y0 = np.sin(np.pi * g.node_coords)
    cert = min_norm_control_linear(0.0, y0, TimeGrid(0.5, 250), om)
    bio.save_control(tmp_path / "long.npz", cert.control, y0)
    text = (CONFIGS / "improve.ini").read_text().replace("source_bound_fraction = 0.8", "control_file = long.npz")
    cfg = write(tmp_path, "imp.ini", text)
    assert run_main("improve", cfg, "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "improvement.json").read_text())
    assert rep["status"] == "improved" and rep["T_new"] < rep["T_original"]
    assert cli.main(["verify", str(tmp_path / "o" / "manifest.json")]) == 0


def test_rng_streams_deterministic():
    a = [r.standard_normal(3) for r in cli._rng_streams(7, 3)]
    b = [r.standard_normal(3) for r in cli._rng_streams(7, 3)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a[0], a[1])
