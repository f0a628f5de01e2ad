import numpy as np
import pytest

from bangbang_heat.config import ConfigError, ConfigSyntaxError, load_config, parse_config

MINIMAL = """
[problem]
n = 99
dt = 1e-3
nonlinearity = zero

[task]
kind = simulate
T = 0.1
"""


def test_minimal_config_accepted():
    cfg = parse_config(MINIMAL)
    assert cfg.n == 99 and cfg.task == "simulate" and cfg.nonlinearity.is_zero
    assert cfg.tgrid().n_steps == 100
    np.testing.assert_allclose(cfg.y0, np.sin(np.pi * cfg.grid.node_coords))
    assert cfg.formats == ("csv", "json", "npz") and cfg.seed == 0


def test_q_below_two_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "\n", overrides={"problem.q": "1"})
    assert any("[2, inf)" in v and "d = 1" in v for v in info.value.violations)


def test_empty_region_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL, overrides={"problem.omega": "(0.5, 0.5)"})
    assert any("omega" in v for v in info.value.violations)


def test_all_violations_reported():
    text = MINIMAL.replace("n = 99", "n = -3").replace("T = 0.1", "T = -1") + "\n[output]\nformats = (csv, pdf)\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    v = info.value.violations
    assert len(v) >= 3
    assert any("problem.n" in s for s in v) and any("task.T" in s for s in v) and any("formats" in s for s in v)


def test_syntax_error_position():
    text = MINIMAL.replace("dt = 1e-3", "dt = (1e-3,,")
    with pytest.raises(ConfigSyntaxError) as info:
        parse_config(text)
    assert info.value.line == 4 and info.value.column is not None


def test_unknown_keys_and_missing_sections():
    with pytest.raises(ConfigError) as info:
        parse_config("[problem]\nn = 9\ndt = 0.1\ncolour = red\n")
    v = info.value.violations
    assert any("colour" in s for s in v) and any("[task]" in s for s in v)


def test_task_requirements():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL, overrides={"task.kind": "'time-optimal'"})
    assert any("problem.M" in s for s in info.value.violations)
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, overrides={"task.kind": "'scaling-study'", "task.magnitudes": "(3, 1)"})


def test_values_and_overrides():
    cfg = parse_config(MINIMAL, overrides={"problem.nonlinearity": "odd_power", "problem.power": "5",
                                           "problem.y0_modes": "(0.0, 2.0)", "problem.omega": "((0.1, 0.2), (0.5, 0.6))",
                                           "task.E": "((0.0, 0.05),)"})
    assert cfg.nonlinearity.power == 5
    np.testing.assert_allclose(cfg.y0, 2 * np.sin(2 * np.pi * cfg.grid.node_coords), atol=1e-15)
    assert cfg.region.intervals == ((0.1, 0.2), (0.5, 0.6))
    assert cfg.time_set(cfg.tgrid()).measure == pytest.approx(0.05)


def test_sign_violating_table_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, overrides={"problem.nonlinearity": "custom", "problem.table_x": "(-1.0, 0.0, 1.0)",
                                         "problem.table_y": "(1.0, 0.0, -1.0)"})


def test_bundled_configs_parse():
    from pathlib import Path

    for path in sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.ini")):
        assert load_config(path).task
