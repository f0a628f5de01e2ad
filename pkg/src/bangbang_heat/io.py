"""CSV, JSON and binary exports.

CSV files carry a header row and print floats with 17 significant digits so
that a value read back is the value written.  Binary files are ``.npz``
archives with the grid header stored next to the data.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .mesh import Grid1D, RegionMask, TimeGrid, TimeSet
from .pde import Trajectory

FLOAT_FORMAT = ".17g"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    return str(v)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def trajectory_rows(traj: Trajectory):
    x = traj.grid.node_coords
    for t, snap in zip(traj.tgrid.times, traj.values):
        for xi, v in zip(x, snap):
            yield (t, xi, v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def json_text(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def save_trajectory(path, traj: Trajectory) -> None:
    """Binary round trip: header ``(n_interior, n_steps, T)`` plus snapshots."""
    with open(path, "wb") as fh:
        np.savez(fh, n_interior=traj.grid.n_interior, n_steps=traj.tgrid.n_steps,
                 t_final=traj.tgrid.t_final, values=traj.values)


def load_trajectory(path) -> Trajectory:
    with np.load(path) as z:
        grid = Grid1D(int(z["n_interior"]))
        tg = TimeGrid(float(z["t_final"]), int(z["n_steps"]))
        return Trajectory(grid, tg, np.array(z["values"]))


def save_control(path, control, y0=None) -> None:
    """Store a control with everything needed to rebuild its masks."""
    from .control import ControlSignal  # noqa: F401  (type documented here)

    omega = np.array(control.space_mask.intervals, dtype=float)
    E = np.array(control.time_set.intervals, dtype=float).reshape(-1, 2)
    extra = {} if y0 is None else {"y0": np.asarray(y0, dtype=float)}
    with open(path, "wb") as fh:
        np.savez(fh, n_interior=control.grid.n_interior, n_steps=control.tgrid.n_steps,
                 t_final=control.tgrid.t_final, values=control.values, omega=omega, E=E,
                 bound_M=control.bound_M, q=control.exponent_q, **extra)


def load_control(path):
    from .control import ControlSignal

    with np.load(path) as z:
        grid = Grid1D(int(z["n_interior"]))
        tg = TimeGrid(float(z["t_final"]), int(z["n_steps"]))
        omega = RegionMask(grid, tuple(map(tuple, z["omega"])))
        E = TimeSet(tg, tuple(map(tuple, z["E"])))
        y0 = np.array(z["y0"]) if "y0" in z.files else None
        ctrl = ControlSignal(omega, E, np.array(z["values"]), float(z["bound_M"]), float(z["q"]))
    return ctrl, y0


def count_rows(path: Path) -> int | None:
    """Data rows of a CSV file; ``None`` for other formats."""
    if path.suffix != ".csv":
        return None
    with open(path, newline="") as fh:
        return max(0, sum(1 for _ in csv.reader(fh)) - 1)
