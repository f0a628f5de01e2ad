"""Empirical constant of the measurable-set observability inequality.

For solutions of ``phi_t - Lap phi + a phi = 0`` the ratio

    R(phi0) = ||phi(T)||_2 / int_{omega x E} |phi| dx dt

is bounded; ``estimate_constant`` maximizes it over a span of sine modes.
Because the equation is linear, each mode is propagated once and ``R`` is
evaluated on coefficient vectors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .mesh import Grid1D, RegionMask, TimeGrid, TimeSet, sine_basis
from .pde import PotentialField, Trajectory, as_potential, solve_adjoint

log = logging.getLogger(__name__)

DEFAULT_MODES = 24
DEFAULT_RESTARTS = 8
ASCENT_ITERS = 500


def observed_mass(phi: Trajectory, omega: RegionMask, E: TimeSet) -> float:
    """``sum_{k in E} dt * h * sum_{i in omega} |phi_{k+1, i}|``.

    Step ``k`` is represented by its end snapshot, the value the implicit
    scheme assigns to the step.
    """
    if E.tgrid != phi.tgrid or omega.grid != phi.grid:
        raise ValueError("trajectory, region and time set must share grids")
    block = phi.values[1:][E.step_flags][:, omega.member_flags]
    return float(phi.tgrid.dt * phi.grid.h * np.abs(block).sum())


@dataclass(frozen=True, eq=False)
class ObservabilityEstimate:
    C_hat: float
    phi0: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    potential: PotentialField = field(repr=False)
    omega: RegionMask = field(repr=False)
    E: TimeSet = field(repr=False)
    n_modes: int
    n_restarts: int
    start_ratios: dict = field(default_factory=dict, repr=False)
    trace: tuple = field(default=(), repr=False)

    @property
    def t_final(self) -> float:
        return self.E.tgrid.t_final

    def row(self) -> dict:
        return {
            "a_sup": self.potential.sup_norm,
            "T": self.t_final,
            "E_measure": self.E.measure,
            "omega_measure": self.omega.measure,
            "C_hat": self.C_hat,
            "n_modes": self.n_modes,
            "restarts": self.n_restarts,
        }


class _ModeSpan:
    """Mode trajectories and the two pieces of ``R`` as functions of coefficients."""

    def __init__(self, a, omega, E, n_modes):
        grid, tgrid = omega.grid, E.tgrid
        self.grid, self.tgrid = grid, tgrid
        self.basis = sine_basis(grid, n_modes)
        finals = np.empty((n_modes, grid.n_interior))
        blocks = []
        for j in range(n_modes):
            traj = solve_adjoint(grid, tgrid, a, self.basis[j])
            finals[j] = traj.final
            blocks.append(traj.values[1:][E.step_flags][:, omega.member_flags].ravel())
        self.gram = grid.h * finals @ finals.T
        self.obs = np.stack(blocks, axis=1) * (tgrid.dt * grid.h)

    def ratio(self, c):
        num = math.sqrt(max(c @ self.gram @ c, 0.0))
        den = float(np.abs(self.obs @ c).sum())
        return num / den if den > 0 else math.inf

    def log_ratio_grad(self, c):
        gc = self.gram @ c
        oc = self.obs @ c
        den = np.abs(oc).sum()
        return gc / (c @ gc) - self.obs.T @ np.sign(oc) / den


def _ascend(span: _ModeSpan, c, iters=ASCENT_ITERS):
    """Quasi-Newton ascent of ``log R`` from ``c``.

    ``R`` is scale invariant, so the search runs unconstrained with the
    gradient projected on the tangent of the sphere; iterates are
    renormalized at the end.
    """

    def neg_log(x):
        nx = np.linalg.norm(x)
        u = x / nx
        r = span.ratio(u)
        if not math.isfinite(r) or r <= 0:
            return math.inf, np.zeros_like(x)
        g = span.log_ratio_grad(u)
        g -= (g @ u) * u
        return -math.log(r), -g / nx

    c = c / np.linalg.norm(c)
    res = minimize(neg_log, c, jac=True, method="BFGS", options={"gtol": 1e-10, "maxiter": iters})
    best = res.x / np.linalg.norm(res.x)
    r = span.ratio(best)
    r0 = span.ratio(c)
    return (best, r) if r >= r0 else (c, r0)


def estimate_constant(
    a,
    omega: RegionMask,
    E: TimeSet,
    n_modes: int = DEFAULT_MODES,
    n_restarts: int = DEFAULT_RESTARTS,
    rng: np.random.Generator | None = None,
    seeds=(),
) -> ObservabilityEstimate:
    """Maximize ``R`` over unit data in the span of the first ``n_modes`` sine modes.

    Starts from every pure mode, from ``n_restarts`` random directions drawn
    from ``rng`` and from any extra coefficient vectors in ``seeds``.
    """
    grid = omega.grid
    if E.is_empty:
        raise ValueError("time set E is empty")
    if not 1 <= n_modes <= grid.n_interior:
        raise ValueError(f"n_modes must lie in [1, {grid.n_interior}], got {n_modes}")
    a = as_potential(a)
    rng = np.random.default_rng(0) if rng is None else rng
    span = _ModeSpan(a, omega, E, n_modes)

    starts = [("mode", j + 1, np.eye(n_modes)[j]) for j in range(n_modes)]
    starts += [("random", i, rng.standard_normal(n_modes)) for i in range(n_restarts)]
    for i, s in enumerate(seeds):
        s = np.asarray(s, dtype=float)
        pad = np.zeros(n_modes)
        pad[: min(n_modes, s.size)] = s[:n_modes]
        if np.any(pad):
            starts.append(("seed", i, pad))

    best_c, best_r = None, -math.inf
    start_ratios = {}
    trace = []
    for kind, idx, c0 in starts:
        r0 = span.ratio(c0 / np.linalg.norm(c0))
        if not math.isfinite(r0):
            # phi vanishes on omega x E for this start; try the next one
            continue
        start_ratios[(kind, idx)] = r0
        c, r = _ascend(span, c0)
        trace.append((kind, idx, r0, r))
        if r > best_r:
            best_c, best_r = c, r
    if best_c is None:
        raise RuntimeError("every start gave a vanishing observation")
    phi0 = best_c @ span.basis
    return ObservabilityEstimate(
        C_hat=best_r,
        phi0=phi0,
        coefficients=best_c,
        potential=a,
        omega=omega,
        E=E,
        n_modes=n_modes,
        n_restarts=n_restarts,
        start_ratios=start_ratios,
        trace=tuple(trace),
    )


def ratio_of(phi0, a, omega: RegionMask, E: TimeSet) -> float:
    """``R(phi0)`` from a direct solve; used to re-evaluate maximizers."""
    traj = solve_adjoint(omega.grid, E.tgrid, a, phi0)
    num = math.sqrt(omega.grid.h * traj.final @ traj.final)
    return num / observed_mass(traj, omega, E)


def nested_estimates(a, omega: RegionMask, sets, **kwargs) -> list[ObservabilityEstimate]:
    """Estimates for time sets ordered by inclusion, largest first.

    Each maximizer seeds the next (smaller) set, so the estimates are
    monotone under inclusion by construction of the search.
    """
    out = []
    seeds = list(kwargs.pop("seeds", ()))
    for E in sets:
        est = estimate_constant(a, omega, E, seeds=seeds, **kwargs)
        seeds = seeds + [est.coefficients]
        out.append(est)
    return out


@dataclass(frozen=True)
class ScalingStudy:
    rows: tuple
    alpha: float
    beta: float
    residual: float
    flagged: tuple = ()

    def envelope_ok(self, factor: float = 1.1) -> bool:
        return all(
            c <= factor * math.exp(self.alpha + self.beta * x)
            for (_, c, _, x) in self.rows
        )

    @property
    def relative_residual(self) -> float:
        """Root-mean-square of ``C_hat / fit - 1`` over the fitted rows."""
        rel = [c / math.exp(self.alpha + self.beta * x) - 1.0 for (_, c, _, x) in self.rows]
        return float(np.sqrt(np.mean(np.square(rel)))) if rel else math.nan


def scaling_study(
    magnitudes,
    omega: RegionMask,
    T: float,
    E_intervals=None,
    dt: float | None = None,
    n_modes: int = DEFAULT_MODES,
    n_restarts: int = DEFAULT_RESTARTS,
    rng: np.random.Generator | None = None,
) -> ScalingStudy:
    """``C_hat`` for ``a = -s`` over magnitudes ``s``, and the fit
    ``log C_hat ~ alpha + beta * (T s + s^(2/3))``.

    ``dt`` defaults to ``min(T / 200, 0.25 / max(s))``.  Rows are
    ``(s, C_hat, log C_hat, T s + s^(2/3))``.
    """
    mags = [float(s) for s in magnitudes]
    if any(s < 0 for s in mags) or mags != sorted(mags):
        raise ValueError("magnitudes must be nonnegative and sorted")
    if dt is None:
        dt = min(T / 200, 0.25 / max(max(mags), 1e-300))
    tg = TimeGrid.from_dt(T, dt)
    E = TimeSet.full(tg) if E_intervals is None else TimeSet(tg, E_intervals)
    rng = np.random.default_rng(0) if rng is None else rng
    rows, flagged = [], []
    for s in mags:
        try:
            est = estimate_constant(-s, omega, E, n_modes, n_restarts, rng)
        except (RuntimeError, ValueError) as exc:
            log.warning("estimate failed at s=%g: %s", s, exc)
            flagged.append((s, str(exc)))
            continue
        x = T * s + s ** (2.0 / 3.0)
        rows.append((s, est.C_hat, math.log(est.C_hat), x))
    if len(rows) >= 2:
        X = np.array([[1.0, r[3]] for r in rows])
        y = np.array([r[2] for r in rows])
        (alpha, beta), *_ = np.linalg.lstsq(X, y, rcond=None)
        residual = float(np.linalg.norm(X @ np.array([alpha, beta]) - y))
    elif rows:
        alpha, beta, residual = rows[0][2], 0.0, 0.0
    else:
        alpha = beta = residual = math.nan
    return ScalingStudy(tuple(rows), float(alpha), float(beta), residual, tuple(flagged))
