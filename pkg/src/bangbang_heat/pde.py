"""Backward Euler solvers for the linear, semilinear and adjoint heat equations.

Step ``k`` advances ``z_k -> z_{k+1}`` by solving

    (I - dt*Lap + dt*A_k) z_{k+1} = z_k + dt*g_k

where ``A_k`` is the potential sampled at the end of the step and ``g_k`` the
source on the step.  The matrix is a symmetric M-matrix whenever
``dt * max(-a) < 1``, which gives the discrete comparison principle and an
exact discrete adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .mesh import Grid1D, TimeGrid, lq_norms
from .nonlinearity import Nonlinearity

# the implicit operator stays positive definite when dt * max(a^-) < 1/2
NEGATIVE_POTENTIAL_LIMIT = 0.5
BLOW_UP_FACTOR = 1e6


class SolverError(RuntimeError):
    """A time step could not be completed."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BlowUpError(SolverError):
    """The sup-norm of the state exceeded the blow-up guard."""


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Zeroth-order coefficient ``a(x, t)``: a scalar or a space-time table.

    Tables may be trajectory-shaped ``(n_steps + 1, n)`` (row ``k + 1`` is used
    on step ``k``) or step-shaped ``(n_steps, n)``.
    """

    values: np.ndarray
    sup_norm: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (0, 2):
            raise ValueError("potential must be a scalar or a 2D space-time table")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential has non-finite entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sup_norm", float(np.max(np.abs(v))) if v.size else 0.0)

    @classmethod
    def constant(cls, c: float) -> "PotentialField":
        return cls(np.asarray(float(c)))

    @classmethod
    def zero(cls) -> "PotentialField":
        return cls.constant(0.0)

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 0

    @property
    def negative_sup(self) -> float:
        return max(0.0, -float(np.min(self.values)))

    def step_values(self, grid: Grid1D, tgrid: TimeGrid) -> np.ndarray:
        n, N = grid.n_interior, tgrid.n_steps
        v = self.values
        if v.ndim == 0:
            return np.full((N, n), float(v))
        if v.shape == (N + 1, n):
            return np.ascontiguousarray(v[1:])
        if v.shape == (N, n):
            return np.ascontiguousarray(v)
        raise ValueError(f"potential table shape {v.shape} does not match grids ({N}+1, {n})")


def as_potential(a) -> PotentialField:
    if a is None:
        return PotentialField.zero()
    if isinstance(a, PotentialField):
        return a
    return PotentialField(np.asarray(a, dtype=float))


@dataclass(frozen=True, eq=False)
class SourceField:
    """Right-hand side ``g``, one row per time step."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("source must be a (n_steps, n_interior) table")
        if not np.all(np.isfinite(v)):
            raise ValueError("source has non-finite entries")
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, grid: Grid1D, tgrid: TimeGrid) -> "SourceField":
        return cls(np.zeros((tgrid.n_steps, grid.n_interior)))

    def l2_in_time(self, grid: Grid1D, tgrid: TimeGrid, q: float = 2.0) -> float:
        """Discrete L^q(0,T; L^q) norm."""
        norms = lq_norms(grid, self.values, q)
        return float((tgrid.dt * np.sum(norms**q)) ** (1.0 / q))


def _source_array(g, grid, tgrid):
    if g is None:
        return np.zeros((tgrid.n_steps, grid.n_interior))
    if isinstance(g, SourceField):
        g = g.values
    elif hasattr(g, "source_values"):
        g = g.source_values()
    g = np.asarray(g, dtype=float)
    if g.shape != (tgrid.n_steps, grid.n_interior):
        raise ValueError(f"source shape {g.shape} does not match grids ({tgrid.n_steps}, {grid.n_interior})")
    if not np.all(np.isfinite(g)):
        raise ValueError("source has non-finite entries")
    return np.ascontiguousarray(g)


def _initial(z0, grid):
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (grid.n_interior,):
        raise ValueError(f"initial datum has shape {z0.shape}, expected ({grid.n_interior},)")
    if not np.all(np.isfinite(z0)):
        raise ValueError("initial datum has non-finite entries")
    return np.ascontiguousarray(z0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Space-time field with ``n_steps + 1`` snapshots; row 0 is t = 0."""

    grid: Grid1D
    tgrid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.tgrid.n_steps + 1, self.grid.n_interior)
        if v.shape != expected:
            raise ValueError(f"trajectory shape {v.shape} != {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("trajectory has non-finite snapshots")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def norms(self, q: float = 2.0) -> np.ndarray:
        return lq_norms(self.grid, self.values, q)

    def shifted(self, n_shift: int) -> "Trajectory":
        """Snapshots from step ``n_shift`` onward, re-based to start at t = 0."""
        N = self.tgrid.n_steps
        if not 0 <= n_shift < N:
            raise ValueError(f"shift {n_shift} outside [0, {N})")
        tg = TimeGrid.with_steps(N - n_shift, self.tgrid.dt)
        return Trajectory(self.grid, tg, self.values[n_shift:])


def _substeps_for(a: PotentialField, dt: float) -> int:
    neg = a.negative_sup
    if neg == 0.0:
        return 1
    m = 1
    while dt / m * neg >= NEGATIVE_POTENTIAL_LIMIT:
        m *= 2
    return m


def solve_linear(grid: Grid1D, tgrid: TimeGrid, a, g, z0) -> Trajectory:
    """Solve ``z_t - Lap z + a z = g`` with ``z(0) = z0`` by backward Euler.

    Steps whose negative potential part violates ``dt * max(a^-) < 1/2`` are
    split into equal substeps (snapshots stay on ``tgrid``).
    """
    a = as_potential(a)
    extra = a.step_values(grid, tgrid)
    src = _source_array(g, grid, tgrid)
    z0 = _initial(z0, grid)
    m = _substeps_for(a, tgrid.dt)
    out = K.march_linear(extra, src, z0, tgrid.dt, grid.h, m)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=1)))
        raise SolverError(f"linear solve broke down at step {bad - 1}", step=bad - 1)
    return Trajectory(grid, tgrid, out)


def solve_adjoint(grid: Grid1D, tgrid: TimeGrid, a, phi0) -> Trajectory:
    """Solve ``phi_t - Lap phi + a phi = 0`` forward from ``phi0``.

    Same scheme as ``solve_linear`` with zero source; see ``adjoint_backward``
    for the time-reversed form used in duality pairings.
    """
    return solve_linear(grid, tgrid, a, None, phi0)


def adjoint_backward(grid: Grid1D, tgrid: TimeGrid, a, phi_T) -> np.ndarray:
    """Discrete adjoint of ``solve_linear``: ``psi_N = phi_T``, ``psi_k = S_k psi_{k+1}``.

    With ``S_k = (I - dt*Lap + dt*A_k)^-1`` symmetric, for any source ``g`` and
    initial state ``z0``,

        <z_N, phi_T> = <z0, psi_0> + sum_k dt <g_k, psi_k>

    holds exactly.  Returns the ``(n_steps + 1, n)`` array ``psi``.
    """
    a = as_potential(a)
    if _substeps_for(a, tgrid.dt) != 1:
        raise ValueError("adjoint pairing needs dt * max(a^-) < 1/2; refine the time grid")
    extra = a.step_values(grid, tgrid)[::-1].copy()
    src = np.zeros_like(extra)
    out = K.march_linear(extra, src, _initial(phi_T, grid), tgrid.dt, grid.h, 1)
    return out[::-1].copy()


def _check_semilinear(status, bad, out):
    if status == K.BLOW_UP:
        raise BlowUpError(f"blow-up guard tripped at step {bad}", step=bad)
    if status == K.NEWTON_FAILED:
        raise SolverError(
            f"implicit step {bad} failed to converge after {K.MAX_HALVINGS} halvings", step=bad
        )


def solve_semilinear(grid: Grid1D, tgrid: TimeGrid, f: Nonlinearity, g, y0, background=None) -> Trajectory:
    """Solve ``y_t - Lap y + f(y) = g`` with ``y(0) = y0``.

    With ``background`` (a trajectory or ``(n_steps + 1, n)`` array ``phi``)
    the shifted equation ``w_t - Lap w + f(phi + w) - f(phi) = g`` is solved
    instead.  Each implicit step is a Newton solve on ``f`` truncated at
    ``|y| <= max|y_k| + dt*max|g_k| + 1``; failing steps are halved.
    """
    src = _source_array(g, grid, tgrid)
    y0 = _initial(y0, grid)
    if f is None or f.is_zero:
        return solve_linear(grid, tgrid, None, src, y0)
    if background is None:
        bg = np.zeros((tgrid.n_steps, grid.n_interior))
    else:
        bg_vals = background.values if isinstance(background, Trajectory) else np.asarray(background, float)
        bg = np.ascontiguousarray(PotentialField(bg_vals).step_values(grid, tgrid))
    scale = np.max(np.abs(y0)) + (np.max(np.abs(src)) if src.size else 0.0) + np.max(np.abs(bg), initial=0.0) + 1.0
    out, status, bad = K.march_semilinear(*f.kernel_args(), bg, src, y0, tgrid.dt, grid.h, BLOW_UP_FACTOR * scale)
    _check_semilinear(status, bad, out)
    return Trajectory(grid, tgrid, out)


def control_to_state(grid: Grid1D, tgrid: TimeGrid, y0, u, f: Nonlinearity | None = None, a=None,
                     background=None) -> Trajectory:
    """State driven by a control: source ``g = chi_omega * chi_E * u``.

    ``u`` is a ``ControlSignal`` (masks applied) or a raw per-step source
    table.  Uses the linear solver with potential ``a`` when ``f`` is None or
    zero, the semilinear solver otherwise.
    """
    if u is None:
        src = None
    elif hasattr(u, "source_values"):
        src = u.source_values()
    else:
        src = np.asarray(u, dtype=float)
    if f is None or f.is_zero:
        return solve_linear(grid, tgrid, a, src, y0)
    if a is not None and as_potential(a).sup_norm > 0:
        raise ValueError("pass either a potential or a nonlinearity, not both")
    return solve_semilinear(grid, tgrid, f, src, y0, background=background)
