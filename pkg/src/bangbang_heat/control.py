"""Null controllability: minimal-norm linear controls, semilinear fixed point,
and an admissible control for the time-optimal problem.

Linear controls are computed by duality.  For terminal adjoint data ``phi``
let ``psi_k`` be the discrete adjoint (``pde.adjoint_backward``) and
``L(phi) = sum_{k in E} dt * ||chi_omega psi_k||``.  The functional

    J(phi) = 1/2 L(phi)^2 + <w_free(T), phi> + rho ||phi||

is convex; its minimizer yields ``u_k = L * chi_omega psi_k / ||chi_omega psi_k||``,
the control of least ``max_k ||u_k||`` that puts ``w(T)`` in the ball of
radius ``rho``.  The gradient of ``J`` is ``w(T) + rho phi/||phi||``, so the
terminal state is read off the optimality condition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Grid1D, RegionMask, TimeGrid, TimeSet, first_eigenvalue, laplacian_apply, lq_norm, lq_norms
from .nonlinearity import Nonlinearity
from .pde import (
    PotentialField,
    SolverError,
    Trajectory,
    adjoint_backward,
    as_potential,
    control_to_state,
    solve_linear,
    solve_semilinear,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
# the dual targets a ball of this fraction of the tolerance, leaving margin
TARGET_FRACTION = 0.5
PICARD_MAX_ITER = 25
PICARD_DIVERGENCE_RUN = 5
PROBE_RANGE = (1e-6, 1e2)


class ControlFailure(RuntimeError):
    """A control solve did not reach its tolerance.

    ``best`` holds the best certificate found, when there is one.
    """

    def __init__(self, message, best=None, diagnosis=None):
        super().__init__(message)
        self.best = best
        self.diagnosis = diagnosis or message


class DivergenceError(ControlFailure):
    """The semilinear fixed-point iteration grew without settling."""


class SignConditionViolation(ControlFailure):
    """Free decay stalled, which cannot happen when f(y) y >= 0."""


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Per-step control values supported on ``space_mask`` x ``time_set``."""

    space_mask: RegionMask
    time_set: TimeSet
    values: np.ndarray = field(repr=False)
    bound_M: float = math.inf
    exponent_q: float = 2.0

    def __post_init__(self):
        grid, tgrid = self.space_mask.grid, self.time_set.tgrid
        v = np.array(self.values, dtype=float)
        if v.shape != (tgrid.n_steps, grid.n_interior):
            raise ValueError(f"control shape {v.shape} != ({tgrid.n_steps}, {grid.n_interior})")
        if not np.all(np.isfinite(v)):
            raise ValueError("control has non-finite values")
        if self.exponent_q < 2:
            raise ValueError(f"control exponent q must be >= 2, got {self.exponent_q}")
        v[:, ~self.space_mask.member_flags] = 0.0
        v[~self.time_set.step_flags, :] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        norms = lq_norms(grid, v, self.exponent_q)
        norms.setflags(write=False)
        object.__setattr__(self, "step_norms", norms)

    @property
    def grid(self) -> Grid1D:
        return self.space_mask.grid

    @property
    def tgrid(self) -> TimeGrid:
        return self.time_set.tgrid

    @property
    def max_norm(self) -> float:
        return float(self.step_norms.max(initial=0.0))

    @property
    def in_constraint_set(self) -> bool:
        return self.max_norm <= self.bound_M

    def source_values(self) -> np.ndarray:
        return self.values

    def with_bound(self, M: float) -> "ControlSignal":
        return ControlSignal(self.space_mask, self.time_set, self.values, M, self.exponent_q)

    @classmethod
    def zero(cls, omega: RegionMask, tgrid: TimeGrid, M: float = math.inf, q: float = 2.0) -> "ControlSignal":
        return cls(omega, TimeSet.full(tgrid), np.zeros((tgrid.n_steps, omega.grid.n_interior)), M, q)


@dataclass(frozen=True)
class DualIterate:
    phi_T: np.ndarray = field(repr=False)
    objective: float
    gradient_norm: float
    smoothing: float


@dataclass(frozen=True, eq=False)
class NullControlCertificate:
    """Control, its trajectory and the measured quality of the null control."""

    control: ControlSignal
    trajectory: Trajectory
    terminal_residual: float
    initial_norm: float
    gain_estimate: float
    iterations: int
    tol: float
    smallness_radius: float = math.nan
    dual: DualIterate | None = None
    potential: PotentialField | None = field(default=None, repr=False)
    pde_residual: float = 0.0
    history: tuple = ()

    @property
    def value(self) -> float:
        """``max_k ||u_k||_q`` of the control."""
        return self.control.max_norm

    @property
    def relative_residual(self) -> float:
        return self.terminal_residual / self.initial_norm if self.initial_norm > 0 else self.terminal_residual

    @property
    def success(self) -> bool:
        return self.terminal_residual <= self.tol * self.initial_norm or (
            self.initial_norm == 0 and self.terminal_residual == 0
        )

    def summary(self) -> dict:
        return {
            "terminal_residual": self.terminal_residual,
            "relative_residual": self.relative_residual,
            "initial_norm": self.initial_norm,
            "control_max_norm": self.value,
            "gain_estimate": self.gain_estimate,
            "smallness_radius": None if math.isnan(self.smallness_radius) else self.smallness_radius,
            "iterations": self.iterations,
            "tol": self.tol,
            "pde_residual": self.pde_residual,
            "n_steps": self.control.tgrid.n_steps,
            "t_final": self.control.tgrid.t_final,
        }


# ---------------------------------------------------------------------------
# linear minimal-norm control


def observation_operator(grid: Grid1D, tgrid: TimeGrid, a, omega_flags, step_flags) -> np.ndarray:
    """Matrices ``Q_k = chi_omega P_k`` with ``P_k phi_T = psi_k``, for steps in E.

    Returns shape ``(n_E, n_omega, n)``; built from one adjoint sweep per node.
    """
    n = grid.n_interior
    steps = np.flatnonzero(step_flags)
    rows = np.flatnonzero(omega_flags)
    Q = np.empty((steps.size, rows.size, n))
    e = np.zeros(n)
    for i in range(n):
        e[:] = 0.0
        e[i] = 1.0
        psi = adjoint_backward(grid, tgrid, a, e)
        Q[:, :, i] = psi[steps][:, rows]
    return Q


class _SmoothedDual:
    """The dual functional with ``||v|| -> sqrt(||v||^2 + eps^2)`` per step.

    Works in plain Euclidean coordinates of ``phi``; inner products carry
    the grid weight ``h`` explicitly.
    """

    def __init__(self, Q, free, rho, h, dt):
        self.Q = Q
        self.flat = Q.reshape(-1, Q.shape[2])
        self.free = free
        self.rho = rho
        self.h = h
        self.dt = dt
        self.n = Q.shape[2]

    def observed(self, phi):
        return self.Q @ phi

    def step_norms(self, v, eps):
        return np.sqrt(self.h * np.einsum("km,km->k", v, v) + eps * eps)

    def value(self, phi, eps):
        nk = self.step_norms(self.observed(phi), eps)
        L = self.dt * nk.sum()
        return 0.5 * L * L + self.h * phi @ self.free + self.rho * math.sqrt(self.h * phi @ phi), L

    def derivatives(self, phi, eps, hessian=True):
        h, dt = self.h, self.dt
        v = self.observed(phi)
        nk = self.step_norms(v, eps)
        L = dt * nk.sum()
        qv = np.einsum("kmi,km->ki", self.Q, v)
        gL = dt * h * (qv / nk[:, None]).sum(axis=0)
        nphi = math.sqrt(h * phi @ phi)
        J = 0.5 * L * L + h * phi @ self.free + self.rho * nphi
        grad = L * gL + h * self.free
        if nphi > 0:
            grad = grad + self.rho * h * phi / nphi
        if not hessian:
            return J, grad, L, None
        scaled = self.flat * np.repeat(np.sqrt(dt * h / nk), self.Q.shape[1])[:, None]
        W = scaled.T @ scaled
        wq = qv * np.sqrt(dt * h * h / nk**3)[:, None]
        W -= wq.T @ wq
        H = np.outer(gL, gL) + L * W
        if nphi > 0:
            H += self.rho * (h * np.eye(self.n) / nphi - h * h * np.outer(phi, phi) / nphi**3)
        return J, grad, L, H

    def gradient_norm(self, grad):
        # h-metric norm of the Riesz representative grad / h
        return float(np.linalg.norm(grad) / math.sqrt(self.h))

    def control_rows(self, phi, eps):
        v = self.observed(phi)
        nk = self.step_norms(v, eps)
        L = self.dt * nk.sum()
        return L * v / nk[:, None]


def _newton_stage(dual, phi, eps, gtol, loose, max_iter=100):
    """Damped Newton on one smoothing level; returns (phi, grad_norm, ok, iters, trace)."""
    trace = []
    gn = math.inf
    for it in range(max_iter):
        J, grad, L, H = dual.derivatives(phi, eps)
        gn = dual.gradient_norm(grad)
        trace.append((J, gn))
        if gn <= gtol:
            return phi, gn, True, it, trace
        reg = 1e-14 * max(np.trace(H), 1e-300)
        try:
            step = np.linalg.solve(H + reg * np.eye(dual.n), -grad)
        except np.linalg.LinAlgError:
            step = -grad / dual.h
        slope = grad @ step
        if not slope < 0:
            step = -grad / dual.h
            slope = grad @ step
        t = 1.0
        while True:
            Jn, _ = dual.value(phi + t * step, eps)
            if Jn <= J + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                return phi, gn, gn <= loose, it, trace
        phi = phi + t * step
    return phi, gn, gn <= loose, max_iter, trace


def _solve_dual_newton(dual, phi0, eps_scale, gtol, loose):
    """Newton with smoothing continuation: eps = scale * 10^-2, 10^-3, ...

    Stops once a level converges and the max-norm has settled, or at the
    first level that fails (keeping the last good one).
    """
    phi = phi0
    best = None
    L_prev = None
    iters = 0
    start = -2
    history = []
    for attempt in range(4):
        eps = eps_scale * 10.0 ** (start + attempt)
        cand, gn, ok, it, trace = _newton_stage(dual, phi, eps, gtol, loose)
        iters += it
        history.extend(trace)
        if ok:
            phi = cand
            best = (phi, eps, gn)
            L_prev = dual.value(phi, eps)[1]
            break
    if best is None:
        return None, iters, history
    level = 0
    while eps > 1e-10 * eps_scale:
        level += 1
        eps *= 0.1
        cand, gn, ok, it, trace = _newton_stage(dual, phi, eps, gtol, loose)
        iters += it
        history.extend(trace)
        if not ok:
            break
        phi = cand
        best = (phi, eps, gn)
        L = dual.value(phi, eps)[1]
        if abs(L - L_prev) <= 1e-9 * L:
            break
        L_prev = L
    return best, iters, history


def _solve_dual_nesterov(dual, phi0, eps, residual_fn, target, max_iter=20000):
    """Accelerated gradient with backtracking and adaptive restart.

    Variables are sine-mode coefficients scaled so that each mode's
    full-domain controllability weight is one.  Stops when ``residual_fn``
    (the terminal residual of the recovered control) drops below ``target``.
    """
    n = dual.n
    B = sine_basis_matrix(n)
    mu = (4.0 * (n + 1) ** 2) * np.sin(np.arange(1, n + 1) * math.pi / (2 * (n + 1))) ** 2
    n_obs = dual.Q.shape[0]
    steps = np.arange(1, n_obs + 1)
    weight = np.array([dual.dt * np.sum((1 + dual.dt * m) ** (-2.0 * steps)) for m in mu])
    P = np.sqrt(weight[0] / weight)

    def to_phi(c):
        return B.T @ (P * c)

    def grad_c(c):
        J, grad, L, _ = dual.derivatives(to_phi(c), eps, hessian=False)
        return J, P * (B @ grad)

    c = np.linalg.solve(B.T * P, phi0) if phi0 is not None else np.zeros(n)
    y = c.copy()
    theta = 1.0
    lip = 1.0
    Jc = dual.value(to_phi(c), eps)[0]
    history = []
    for it in range(max_iter):
        Jy, gy = grad_c(y)
        res = residual_fn(to_phi(y))
        history.append((Jy, res))
        if res <= target:
            return to_phi(y), it, history
        while True:
            cn = y - gy / lip
            Jn = dual.value(to_phi(cn), eps)[0]
            if Jn <= Jy - 0.5 / lip * gy @ gy:
                break
            lip *= 2.0
        if Jn > Jc:
            y = c.copy()
            theta = 1.0
            continue
        theta_n = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        y = cn + (theta - 1.0) / theta_n * (cn - c)
        c, Jc, theta = cn, Jn, theta_n
        lip *= 0.95
    return to_phi(c), max_iter, history


def sine_basis_matrix(n: int) -> np.ndarray:
    # orthonormal in the h-weighted inner product on n interior nodes
    x = np.arange(1, n + 1) / (n + 1)
    k = np.arange(1, n + 1)[:, None]
    return math.sqrt(2.0) * np.sin(k * math.pi * x[None, :])


def _zero_certificate(grid, tgrid, a, w0, omega, E, tol, q, traj=None):
    control = ControlSignal(omega, E, np.zeros((tgrid.n_steps, grid.n_interior)), math.inf, q)
    if traj is None:
        traj = solve_linear(grid, tgrid, a, None, w0)
    return NullControlCertificate(
        control=control,
        trajectory=traj,
        terminal_residual=lq_norm(grid, traj.final),
        initial_norm=lq_norm(grid, w0),
        gain_estimate=0.0,
        iterations=0,
        tol=tol,
        potential=as_potential(a),
    )


def min_norm_control_linear(
    a,
    w0,
    tgrid: TimeGrid,
    omega: RegionMask,
    E: TimeSet | None = None,
    tol: float = DEFAULT_TOL,
    q: float = 2.0,
    method: str = "newton",
    target_fraction: float = TARGET_FRACTION,
) -> NullControlCertificate:
    """Control of least ``max_k ||u_k||_2`` steering ``w0`` near zero at ``T``.

    Solves ``w_t - Lap w + a w = chi_omega chi_E u`` and guarantees
    ``||w(T)||_2 <= tol * ||w0||_2``; raises ``ControlFailure`` otherwise.

    Parameters
    ----------
    a : PotentialField, float or array
        Potential, scalar or space-time table.
    w0 : ndarray
        Initial state on the interior nodes.
    tgrid, omega, E
        Time grid, control region and control time set (default: all steps).
    tol : float
        Relative terminal tolerance.
    method : {"newton", "nesterov"}
        ``newton`` runs damped Newton with smoothing continuation;
        ``nesterov`` runs accelerated gradient on the smoothed functional.
    target_fraction : float
        The dual aims at ``target_fraction * tol``; the rest is margin.
    """
    grid = omega.grid
    if E is None:
        E = TimeSet.full(tgrid)
    if E.tgrid != tgrid:
        raise ValueError("time set is defined on a different time grid")
    if E.is_empty:
        raise ValueError("control time set E is empty; the observability estimate needs |E| > 0")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if q != 2:
        raise NotImplementedError("the dual solver supports q = 2 only; other q are checked on replay")
    a = as_potential(a)
    w0 = np.asarray(w0, dtype=float)
    nw0 = lq_norm(grid, w0)
    if nw0 == 0.0:
        return _zero_certificate(grid, tgrid, a, w0, omega, E, tol, q)
    free_traj = solve_linear(grid, tgrid, a, None, w0)
    free = free_traj.final
    rho = target_fraction * tol * nw0
    if lq_norm(grid, free) <= rho:
        return _zero_certificate(grid, tgrid, a, w0, omega, E, tol, q, traj=free_traj)

    Q = observation_operator(grid, tgrid, a, omega.member_flags, E.step_flags)
    dual = _SmoothedDual(Q, free, rho, grid.h, tgrid.dt)
    # start on the ray -free, at the best multiple
    d = -free / lq_norm(grid, free)
    _, L_d = dual.value(d, 0.0)
    phi0 = (lq_norm(grid, free) - rho) / L_d**2 * d
    eps_scale = dual.value(phi0, 0.0)[1] / (tgrid.dt * Q.shape[0])

    def recover(phi, eps):
        values = np.zeros((tgrid.n_steps, grid.n_interior))
        rows = dual.control_rows(phi, eps)
        values[np.ix_(E.step_flags, omega.member_flags)] = rows
        return ControlSignal(omega, E, values, math.inf, q)

    def replay(control):
        return solve_linear(grid, tgrid, a, control.values, w0)

    if method == "newton":
        best, iters, history = _solve_dual_newton(dual, phi0, eps_scale, gtol=1e-3 * rho, loose=0.5 * rho)
        if best is None:
            raise ControlFailure("dual Newton iteration failed at every smoothing level",
                                 diagnosis="dual_not_converged")
        phi, eps, gn = best
    elif method == "nesterov":
        eps = 1e-6 * eps_scale

        def residual_fn(phi):
            return lq_norm(grid, replay(recover(phi, eps)).final)

        phi, iters, history = _solve_dual_nesterov(dual, phi0, eps, residual_fn, tol * nw0)
        gn = dual.gradient_norm(dual.derivatives(phi, eps, hessian=False)[1])
    else:
        raise ValueError(f"unknown method {method!r}")

    control = recover(phi, eps)
    traj = replay(control)
    residual = lq_norm(grid, traj.final)
    cert = NullControlCertificate(
        control=control,
        trajectory=traj,
        terminal_residual=residual,
        initial_norm=nw0,
        gain_estimate=control.max_norm / nw0,
        iterations=iters,
        tol=tol,
        dual=DualIterate(phi, dual.value(phi, eps)[0], gn, eps),
        potential=a,
        history=tuple(history),
    )
    if residual > tol * nw0:
        raise ControlFailure(
            f"terminal residual {residual:.3e} exceeds tol * ||w0|| = {tol * nw0:.3e} after {iters} iterations",
            best=cert,
            diagnosis="residual_above_tolerance",
        )
    return cert


# ---------------------------------------------------------------------------
# semilinear null control


def _background_values(phi_ref, grid, tgrid):
    if phi_ref is None:
        return np.zeros((tgrid.n_steps + 1, grid.n_interior))
    v = phi_ref.values if isinstance(phi_ref, Trajectory) else np.asarray(phi_ref, dtype=float)
    if v.shape != (tgrid.n_steps + 1, grid.n_interior):
        raise ValueError(f"background shape {v.shape} does not match grids")
    return v


def semilinear_residual(grid, tgrid, f, background, w, g) -> np.ndarray:
    """Per-step residual of the implicit scheme for ``w_t - Lap w + f(phi+w) - f(phi) = g``.

    Row ``k`` is ``w_{k+1} - w_k - dt*Lap w_{k+1} + dt*(f(phi_{k+1}+w_{k+1}) - f(phi_{k+1}) - g_k)``.
    """
    dt = tgrid.dt
    nxt = w[1:]
    phi = background[1:]
    return nxt - w[:-1] - dt * laplacian_apply(grid, nxt) + dt * (f.evaluate(phi + nxt) - f.evaluate(phi) - g)


def semilinear_null_control(
    f: Nonlinearity,
    phi_ref,
    w0,
    tgrid: TimeGrid,
    omega: RegionMask,
    E: TimeSet | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = PICARD_MAX_ITER,
) -> NullControlCertificate:
    """Null control of ``w_t - Lap w + f(phi+w) - f(phi) = chi_omega chi_E v``.

    Picard iteration over linearized problems: starting from ``xi = 0``, the
    potential ``a = (f(phi + xi) - f(phi)) / xi`` is frozen, the linear
    minimal-norm control is computed, and ``xi`` is replaced by the new state.
    Stops when ``max|xi_new - xi| <= tol * max|w0|``.
    """
    grid = omega.grid
    if E is None:
        E = TimeSet.full(tgrid)
    w0 = np.asarray(w0, dtype=float)
    bg = _background_values(phi_ref, grid, tgrid)
    nw0 = lq_norm(grid, w0)
    sup0 = float(np.max(np.abs(w0)))
    if nw0 == 0.0:
        cert = _zero_certificate(grid, tgrid, 0.0, w0, omega, E, tol, 2.0)
        return cert
    if f.is_zero:
        cert = min_norm_control_linear(0.0, w0, tgrid, omega, E, tol)
        return _with(cert, iterations=1, history=())

    xi = np.zeros((tgrid.n_steps + 1, grid.n_interior))
    growth_run = 0
    prev_sup = 0.0
    history = []
    cert = None
    for m in range(1, max_iter + 1):
        a = PotentialField(f.linearized_potential(bg, xi))
        try:
            cert = min_norm_control_linear(a, w0, tgrid, omega, E, tol)
        except ControlFailure as exc:
            raise ControlFailure(f"linear solve failed at Picard iteration {m}: {exc}",
                                 best=exc.best, diagnosis=exc.diagnosis) from exc
        w = cert.trajectory.values
        change = float(np.max(np.abs(w - xi)))
        sup = float(np.max(np.abs(w)))
        history.append((m, change, sup, cert.value))
        log.debug("picard %d: change %.3e sup %.3e norm %.3e", m, change, sup, cert.value)
        if not np.isfinite(change):
            raise DivergenceError("Picard iterate became non-finite; shrink ||w0||")
        growth_run = growth_run + 1 if sup > prev_sup * (1.0 + 1e-12) and m > 1 else 0
        if growth_run >= PICARD_DIVERGENCE_RUN:
            raise DivergenceError(
                f"Picard iterate sup-norm grew {PICARD_DIVERGENCE_RUN} times in a row; shrink ||w0||",
                best=cert,
                diagnosis="divergence",
            )
        prev_sup = sup
        xi = w
        if change <= tol * sup0:
            break
    else:
        raise ControlFailure(
            f"Picard iteration did not settle in {max_iter} iterations (last change {change:.3e})",
            best=cert,
            diagnosis="picard_not_converged",
        )

    # a-posteriori check against the semilinear scheme itself
    g = cert.control.values
    res = semilinear_residual(grid, tgrid, f, bg, cert.trajectory.values, g)
    pde_residual = float(lq_norms(grid, res).max() / nw0)
    replay = solve_semilinear(grid, tgrid, f, g, w0, background=bg)
    terminal = lq_norm(grid, replay.final)
    out = _with(cert, iterations=m, history=tuple(history), pde_residual=pde_residual,
                trajectory=replay, terminal_residual=terminal, smallness_radius=sup0)
    if terminal > tol * nw0:
        raise ControlFailure(
            f"semilinear replay residual {terminal:.3e} exceeds tol * ||w0|| = {tol * nw0:.3e}",
            best=out,
            diagnosis="replay_residual",
        )
    return out


def _with(cert: NullControlCertificate, **changes) -> NullControlCertificate:
    fields = {k: getattr(cert, k) for k in cert.__dataclass_fields__}
    fields.update(changes)
    return NullControlCertificate(**fields)


def probe_smallness_radius(
    f: Nonlinearity,
    phi_ref,
    direction,
    tgrid: TimeGrid,
    omega: RegionMask,
    E: TimeSet | None = None,
    tol: float = DEFAULT_TOL,
    bounds=PROBE_RANGE,
    rel_tol: float = 0.05,
) -> tuple[float, bool]:
    """Largest sup-norm scale ``s`` for which the semilinear null control converges.

    Bisection in ``log s`` over ``bounds``.  Returns ``(rho_hat, flagged)``;
    ``flagged`` is True when even the smallest scale fails (``rho_hat = 0``).
    """
    direction = np.asarray(direction, dtype=float)
    sup = float(np.max(np.abs(direction)))
    if sup == 0:
        raise ValueError("probe direction must be nonzero")
    unit = direction / sup
    lo, hi = bounds

    def ok(s):
        try:
            semilinear_null_control(f, phi_ref, s * unit, tgrid, omega, E, tol)
            return True
        except (ControlFailure, SolverError):
            return False

    if f.is_zero or ok(hi):
        return float(hi), False
    if not ok(lo):
        return 0.0, True
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return float(lo), False


# ---------------------------------------------------------------------------
# admissible control


@dataclass(frozen=True, eq=False)
class AdmissibleControl:
    T0: float
    control: ControlSignal
    total_time: float
    trajectory: Trajectory
    gain_estimate: float
    smallness_radius: float
    blocks: tuple = ()

    def __iter__(self):
        return iter((self.T0, self.control, self.total_time))


def construct_admissible(
    f: Nonlinearity,
    y0,
    M: float,
    omega: RegionMask,
    dt: float,
    tol: float = DEFAULT_TOL,
    q: float = 2.0,
    block: float = 1.0,
    max_blocks: int = 50,
) -> AdmissibleControl:
    """Two-phase admissible control: free decay, then a unit-time null control.

    Phase 1 lets the state decay in blocks of length ``block`` until the
    semilinear null control of the current state over one block converges
    with ``max ||u_k|| <= M``.  Phase 2 applies that control.  The result
    steers ``y0`` to ``||y||_2 <= tol * ||y0||_2`` at ``total_time``.
    """
    if not f.sign_condition:
        raise ValueError("construct_admissible needs a nonlinearity with f(y) y >= 0")
    grid = omega.grid
    y0 = np.asarray(y0, dtype=float)
    ny0 = lq_norm(grid, y0)
    if ny0 == 0.0:
        tg = TimeGrid.with_steps(1, dt)
        traj = Trajectory(grid, tg, np.zeros((2, grid.n_interior)))
        return AdmissibleControl(0.0, ControlSignal.zero(omega, tg, M, q), 0.0, traj, 0.0, math.nan)
    lam1 = first_eigenvalue(grid)
    block_grid = TimeGrid.from_dt(block, dt)
    nb = block_grid.n_steps
    block_grid = TimeGrid.with_steps(nb, dt)
    discrete_decay = (1.0 + dt * lam1) ** (-nb)

    state = y0
    free_parts = []
    attempts = []
    for b in range(max_blocks + 1):
        w0 = state
        cert = None
        try:
            cert = semilinear_null_control(f, None, w0, block_grid, omega, None, tol * ny0 / lq_norm(grid, w0))
        except (ControlFailure, SolverError) as exc:
            attempts.append((b, lq_norm(grid, w0), float(np.max(np.abs(w0))), None, str(exc)))
        if cert is not None:
            attempts.append((b, lq_norm(grid, w0), float(np.max(np.abs(w0))), cert.value, "ok"))
            if cert.value <= M:
                break
        if b == max_blocks:
            raise ControlFailure(f"no admissible control found within {max_blocks} free-decay blocks",
                                 diagnosis="admissible_not_found")
        free = solve_semilinear(grid, block_grid, f, None, state)
        before, after = lq_norm(grid, state), lq_norm(grid, free.final)
        if after > discrete_decay * before * (1.0 + 1e-9) + 1e-300:
            raise SignConditionViolation(
                "free decay stalled; this requires f(y) y >= 0 (sign condition) to be violated",
                diagnosis="decay_stalled",
            )
        free_parts.append(free.values[1:])
        state = free.final

    n_free = len(free_parts) * nb
    total_steps = n_free + nb
    tg = TimeGrid.with_steps(total_steps, dt)
    values = np.zeros((total_steps, grid.n_interior))
    values[n_free:] = cert.control.values
    E = TimeSet(tg, ((n_free * dt, tg.t_final),))
    control = ControlSignal(omega, E, values, M, q)
    traj = control_to_state(grid, tg, y0, control, f)
    return AdmissibleControl(
        T0=n_free * dt,
        control=control,
        total_time=tg.t_final,
        trajectory=traj,
        gain_estimate=cert.gain_estimate,
        smallness_radius=cert.smallness_radius,
        blocks=tuple(attempts),
    )
