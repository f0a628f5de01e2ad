"""Uniform discretization of the unit interval and the time horizon.

Boundary values are homogeneous Dirichlet and never stored: every field is a
vector over the ``n_interior`` interior nodes.  Time steps are indexed so that
step ``k`` covers ``(t_k, t_{k+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# slack used when deciding whether a node or midpoint sits on an interval end
_EDGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Interior nodes ``x_i = i / (n_interior + 1)`` of (0, 1)."""

    n_interior: int
    h: float = field(init=False)
    node_coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"n_interior must be a positive integer, got {self.n_interior!r}")
        n = int(self.n_interior)
        object.__setattr__(self, "n_interior", n)
        object.__setattr__(self, "h", 1.0 / (n + 1))
        coords = np.arange(1, n + 1) / (n + 1)
        coords.setflags(write=False)
        object.__setattr__(self, "node_coords", coords)

    def __eq__(self, other):
        return isinstance(other, Grid1D) and other.n_interior == self.n_interior

    def __hash__(self):
        return hash(("Grid1D", self.n_interior))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Uniform partition of (0, t_final) into ``n_steps`` steps."""

    t_final: float
    n_steps: int
    dt: float = field(init=False)

    def __post_init__(self):
        if not (self.t_final > 0 and math.isfinite(self.t_final)):
            raise ValueError(f"t_final must be positive and finite, got {self.t_final!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "t_final", float(self.t_final))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "dt", self.t_final / self.n_steps)

    @classmethod
    def from_dt(cls, t_final: float, dt: float) -> "TimeGrid":
        """Grid with ``round(t_final / dt)`` steps (at least one); ``t_final`` is kept."""
        return cls(t_final, max(1, int(round(t_final / dt))))

    @classmethod
    def with_steps(cls, n_steps: int, dt: float) -> "TimeGrid":
        """Grid of ``n_steps`` steps of size exactly ``dt``."""
        return cls(n_steps * dt, n_steps)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def step_midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def __eq__(self, other):
        return (
            isinstance(other, TimeGrid)
            and other.n_steps == self.n_steps
            and other.t_final == self.t_final
        )

    def __hash__(self):
        return hash(("TimeGrid", self.t_final, self.n_steps))


def _normalize_intervals(intervals, lo, hi, what):
    if len(intervals) == 2 and np.isscalar(intervals[0]):
        intervals = [intervals]
    out = []
    for pair in intervals:
        left, right = (float(v) for v in pair)
        if not (lo <= left < right <= hi):
            raise ValueError(f"{what} interval ({left}, {right}) must satisfy {lo} <= left < right <= {hi}")
        out.append((left, right))
    out.sort()
    for (_, r0), (l1, _) in zip(out, out[1:]):
        if l1 < r0:
            raise ValueError(f"{what} intervals overlap: {out}")
    return tuple(out)


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Indicator of the control region, a union of closed subintervals of [0, 1]."""

    grid: Grid1D
    intervals: tuple
    member_flags: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ivs = _normalize_intervals(self.intervals, 0.0, 1.0, "region")
        object.__setattr__(self, "intervals", ivs)
        x = self.grid.node_coords
        flags = np.zeros(x.shape, dtype=bool)
        for left, right in ivs:
            flags |= (x >= left - _EDGE_TOL) & (x <= right + _EDGE_TOL)
        if not flags.any():
            raise ValueError(f"region {ivs} contains no interior node of the grid (n={self.grid.n_interior})")
        flags.setflags(write=False)
        object.__setattr__(self, "member_flags", flags)

    @property
    def interval_spec(self) -> tuple:
        return self.intervals[0] if len(self.intervals) == 1 else self.intervals

    @property
    def measure(self) -> float:
        return math.fsum(r - l for l, r in self.intervals)

    def indicator(self) -> np.ndarray:
        return self.member_flags.astype(float)

    @classmethod
    def full(cls, grid: Grid1D) -> "RegionMask":
        return cls(grid, ((0.0, 1.0),))


@dataclass(frozen=True, eq=False)
class TimeSet:
    """Finite union of disjoint subintervals of (0, T), sampled on a time grid.

    A step belongs to the set iff its midpoint does.
    """

    tgrid: TimeGrid
    intervals: tuple
    step_flags: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T = self.tgrid.t_final
        ivs = self.intervals
        if len(ivs):
            # clip to the horizon before validation; (a, b) beyond T is shortened
            if len(ivs) == 2 and np.isscalar(ivs[0]):
                ivs = [ivs]
            clipped = [(max(0.0, float(a)), min(T, float(b))) for a, b in ivs]
            clipped = [(a, b) for a, b in clipped if b > a]
            ivs = _normalize_intervals(clipped, 0.0, T, "time") if clipped else ()
        object.__setattr__(self, "intervals", tuple(ivs))
        mids = self.tgrid.step_midpoints
        flags = np.zeros(mids.shape, dtype=bool)
        for a, b in self.intervals:
            flags |= (mids > a) & (mids < b)
        flags.setflags(write=False)
        object.__setattr__(self, "step_flags", flags)

    @property
    def measure(self) -> float:
        return math.fsum(b - a for a, b in self.intervals)

    @property
    def discrete_measure(self) -> float:
        """``dt`` times the number of member steps."""
        return float(np.count_nonzero(self.step_flags)) * self.tgrid.dt

    @property
    def is_empty(self) -> bool:
        return not self.step_flags.any()

    @classmethod
    def full(cls, tgrid: TimeGrid) -> "TimeSet":
        return cls(tgrid, ((0.0, tgrid.t_final),))

    @classmethod
    def from_step_flags(cls, tgrid: TimeGrid, flags) -> "TimeSet":
        """Union of the step intervals whose flag is set (adjacent runs merged)."""
        flags = np.asarray(flags, dtype=bool)
        if flags.shape != (tgrid.n_steps,):
            raise ValueError("one flag per time step is required")
        dt = tgrid.dt
        ivs = []
        k = 0
        while k < flags.size:
            if flags[k]:
                j = k
                while j + 1 < flags.size and flags[j + 1]:
                    j += 1
                ivs.append((k * dt, min((j + 1) * dt, tgrid.t_final)))
                k = j + 1
            else:
                k += 1
        return cls(tgrid, tuple(ivs))


def _check_len(grid: Grid1D, *fields):
    for f in fields:
        if np.shape(f)[-1] != grid.n_interior:
            raise ValueError(f"field has {np.shape(f)[-1]} values, grid has {grid.n_interior} interior nodes")


def laplacian_apply(grid: Grid1D, field: np.ndarray) -> np.ndarray:
    """Three-point Dirichlet Laplacian; works along the last axis."""
    f = np.asarray(field, dtype=float)
    _check_len(grid, f)
    out = -2.0 * f
    out[..., 1:] += f[..., :-1]
    out[..., :-1] += f[..., 1:]
    return out / (grid.h * grid.h)


def lq_norm(grid: Grid1D, field: np.ndarray, q: float = 2.0) -> float:
    """Discrete L^q(0,1) norm, ``(h * sum |f_i|^q)^(1/q)``; ``q=inf`` gives the max."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    f = np.abs(np.asarray(field, dtype=float))
    if math.isinf(q):
        return float(f.max(initial=0.0))
    if q == 2:
        return float(math.sqrt(grid.h * np.dot(f, f)))
    return float((grid.h * np.sum(f**q)) ** (1.0 / q))


def lq_norms(grid: Grid1D, fields: np.ndarray, q: float = 2.0) -> np.ndarray:
    """Row-wise ``lq_norm`` of a stack of fields."""
    f = np.abs(np.atleast_2d(np.asarray(fields, dtype=float)))
    if math.isinf(q):
        return f.max(axis=1, initial=0.0)
    if q == 2:
        return np.sqrt(grid.h * np.einsum("ij,ij->i", f, f))
    return (grid.h * np.sum(f**q, axis=1)) ** (1.0 / q)


def inner_product(grid: Grid1D, f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    _check_len(grid, f)
    return float(grid.h * np.dot(f, g))


def mode_eigenvalue(grid: Grid1D, k: int) -> float:
    """Eigenvalue of ``-laplacian_apply`` for the k-th discrete sine mode."""
    return 4.0 / grid.h**2 * math.sin(k * math.pi * grid.h / 2.0) ** 2


def first_eigenvalue(grid: Grid1D) -> float:
    """Smallest eigenvalue of the discrete Dirichlet Laplacian.

    Tends to the continuum value pi**2 from below as the grid is refined.
    """
    return mode_eigenvalue(grid, 1)


def sine_mode(grid: Grid1D, k: int) -> np.ndarray:
    return np.sin(k * math.pi * grid.node_coords)


def sine_basis(grid: Grid1D, n_modes: int) -> np.ndarray:
    """L2-orthonormal discrete sine modes, one per row."""
    k = np.arange(1, n_modes + 1)[:, None]
    return math.sqrt(2.0) * np.sin(k * math.pi * grid.node_coords[None, :])
