import json
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from bangbang_heat import io as bio
from bangbang_heat.control import ControlSignal
from bangbang_heat.mesh import Grid1D, RegionMask, TimeGrid, TimeSet
from bangbang_heat.pde import solve_linear


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trip(v):
    assert float(bio.fmt(v)) == v


def test_csv_text_and_read(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(bio.csv_text(("t", "value"), [(0.1, 1 / 3), (0.2, -2.0)]))
    header, rows = bio.read_csv(p)
    assert header == ["t", "value"] and float(rows[0][1]) == 1 / 3
    assert bio.count_rows(p) == 2


def test_json_non_finite():
    doc = json.loads(bio.json_text({"b": math.inf, "a": 1.0}))
    assert doc == {"a": 1.0, "b": "inf"}


def test_trajectory_round_trip(tmp_path):
    g, tg = Grid1D(9), TimeGrid(0.1, 7)
    traj = solve_linear(g, tg, 0.0, None, np.sin(np.pi * g.node_coords))
    bio.save_trajectory(tmp_path / "t.npz", traj)
    back = bio.load_trajectory(tmp_path / "t.npz")
    assert back.grid == g and back.tgrid == tg
    np.testing.assert_array_equal(back.values, traj.values)
    rows = list(bio.trajectory_rows(traj))
    assert len(rows) == 8 * 9 and rows[0][:2] == (0.0, g.node_coords[0])


def test_control_round_trip(tmp_path, rng):
    g, tg = Grid1D(9), TimeGrid(0.1, 7)
    u = ControlSignal(RegionMask(g, ((0.1, 0.3), (0.6, 0.8))), TimeSet(tg, ((0.02, 0.07),)),
                      rng.standard_normal((7, 9)), 2.5, 3.0)
    y0 = rng.standard_normal(9)
    bio.save_control(tmp_path / "u.npz", u, y0)
    back, y0b = bio.load_control(tmp_path / "u.npz")
    np.testing.assert_array_equal(back.values, u.values)
    np.testing.assert_array_equal(y0b, y0)
    assert back.bound_M == 2.5 and back.exponent_q == 3.0
    np.testing.assert_array_equal(back.time_set.step_flags, u.time_set.step_flags)
