"""Minimal time under a norm bound: N(T), bisection for T*, saturation and improvement.

``N(T)`` is the least ``max_k ||u_k||`` of a control steering ``y0`` to
``||y(T)||_2 <= tol * ||y0||_2``.  It is nonincreasing in ``T``, so the
minimal time ``T*`` under the bound ``M`` solves ``N(T) = M`` and is found by
bisection over whole time steps of a fixed ``dt``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    DEFAULT_TOL,
    ControlFailure,
    ControlSignal,
    NullControlCertificate,
    construct_admissible,
    min_norm_control_linear,
    semilinear_null_control,
)
from .mesh import RegionMask, TimeGrid, TimeSet, lq_norm, lq_norms
from .nonlinearity import Nonlinearity
from .pde import SolverError, Trajectory, control_to_state, solve_semilinear

log = logging.getLogger(__name__)

SATURATION_THRESHOLD = 0.05
MIN_VIOLATION_STEPS = 2
TRIM_STEPS = 2
DELTA_CANDIDATES = 32
# fractions of the horizon tried as free-decay prefixes for semilinear N(T)
PREFIX_FRACTIONS = (0.0, 0.25, 0.5, 0.75)


class BracketError(RuntimeError):
    """No horizon with N(T) <= M was found; carries the sampled curve."""

    def __init__(self, message, n_curve):
        super().__init__(message)
        self.n_curve = n_curve


class NotImprovable(Exception):
    """The control has no slack set to exploit; evidence of saturation."""

    def __init__(self, message, step_ratios=None):
        super().__init__(message)
        self.step_ratios = step_ratios


class ImprovementFailure(RuntimeError):
    """The time-shift search ran out of candidates."""

    def __init__(self, message, continuity_modulus=()):
        super().__init__(message)
        self.continuity_modulus = continuity_modulus


# ---------------------------------------------------------------------------
# minimal norm


@dataclass(frozen=True, eq=False)
class NormSample:
    """One evaluation of ``N(T)``."""

    t_final: float
    n_steps: int
    value: float
    certificate: NullControlCertificate | None = field(default=None, repr=False)
    control: ControlSignal | None = field(default=None, repr=False)
    prefix_time: float = 0.0
    diagnosis: str = ""

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.value)


def norm_sample(
    f: Nonlinearity,
    y0,
    n_steps: int,
    dt: float,
    omega: RegionMask,
    tol: float = DEFAULT_TOL,
    q: float = 2.0,
) -> NormSample:
    """Evaluate ``N(T)`` at ``T = n_steps * dt`` and keep the control.

    Semilinear problems are solved around the zero background with
    ``w0 = y0``; when that fails a free-decay prefix is inserted and only the
    tail is controlled.  Failure everywhere gives ``value = inf``.
    """
    grid = omega.grid
    tg = TimeGrid.with_steps(n_steps, dt)
    y0 = np.asarray(y0, dtype=float)
    ny0 = lq_norm(grid, y0)
    if ny0 == 0.0:
        zero = ControlSignal.zero(omega, tg, q=q)
        return NormSample(tg.t_final, n_steps, 0.0, None, zero)
    if f.is_zero:
        try:
            cert = min_norm_control_linear(0.0, y0, tg, omega, None, tol, q)
        except ControlFailure as exc:
            return NormSample(tg.t_final, n_steps, math.inf, exc.best, None, 0.0, exc.diagnosis)
        return NormSample(tg.t_final, n_steps, cert.value, cert, cert.control)

    diagnosis = ""
    for frac in PREFIX_FRACTIONS:
        n_pre = int(frac * n_steps)
        if n_pre >= n_steps:
            break
        if n_pre:
            free = solve_semilinear(grid, TimeGrid.with_steps(n_pre, dt), f, None, y0)
            w0 = free.final
        else:
            w0 = y0
        tail = TimeGrid.with_steps(n_steps - n_pre, dt)
        nw0 = lq_norm(grid, w0)
        try:
            cert = semilinear_null_control(f, None, w0, tail, omega, None, tol * ny0 / max(nw0, 1e-300))
        except (ControlFailure, SolverError) as exc:
            diagnosis = f"prefix {n_pre * dt:.6g}: {exc}"
            continue
        values = np.zeros((n_steps, grid.n_interior))
        values[n_pre:] = cert.control.values
        control = ControlSignal(omega, TimeSet.full(tg), values, math.inf, q)
        return NormSample(tg.t_final, n_steps, control.max_norm, cert, control, n_pre * dt)
    return NormSample(tg.t_final, n_steps, math.inf, None, None, 0.0, diagnosis or "infeasible")


def minimal_norm(f, y0, T: float, omega: RegionMask, tol: float = DEFAULT_TOL, dt: float | None = None,
                 q: float = 2.0) -> float:
    """``N(T)``: least uniform control bound reaching the tolerance at ``T``.

    ``dt`` defaults to ``T / 250``; ``T`` is rounded to whole steps.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if dt is None:
        dt = T / 250
    n_steps = max(1, int(round(T / dt)))
    return norm_sample(f, y0, n_steps, dt, omega, tol, q).value


# ---------------------------------------------------------------------------
# minimal time


@dataclass(frozen=True, eq=False)
class TimeOptResult:
    T_star: float
    control: ControlSignal
    N_curve: tuple
    saturation_profile: np.ndarray = field(repr=False)
    M: float
    tol: float
    tol_T: float
    dt: float
    bracket: tuple
    terminal_residual: float
    initial_norm: float
    degenerate: bool = False
    evaluations: int = 0

    @property
    def n_curve_monotone(self) -> bool:
        vals = [v for _, v in self.N_curve]
        band = 1e-3 * self.M
        return all(b <= a + band for a, b in zip(vals, vals[1:]))

    def summary(self) -> dict:
        return {
            "T_star": self.T_star,
            "M": self.M,
            "tol": self.tol,
            "tol_T": self.tol_T,
            "dt": self.dt,
            "bracket": list(self.bracket),
            "terminal_residual": self.terminal_residual,
            "relative_residual": self.terminal_residual / self.initial_norm if self.initial_norm else 0.0,
            "control_max_norm": self.control.max_norm,
            "n_curve_points": len(self.N_curve),
            "n_curve_monotone": self.n_curve_monotone,
            "degenerate": self.degenerate,
            "evaluations": self.evaluations,
        }


def optimal_time(
    f: Nonlinearity,
    y0,
    M: float,
    omega: RegionMask,
    tol_T: float = 0.01,
    tol: float = DEFAULT_TOL,
    dt: float = 2e-3,
    q: float = 2.0,
    t_hi: float | None = None,
) -> TimeOptResult:
    """Least ``T`` with ``N(T) <= M`` up to ``tol_T``, with its control.

    The upper end of the bracket comes from ``construct_admissible`` unless
    ``t_hi`` is given; the lower end is found by halving.  Returns
    ``T_star = T_hi`` of the final bracket.
    """
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    if not tol_T > 0:
        raise ValueError(f"tol_T must be positive, got {tol_T}")
    grid = omega.grid
    y0 = np.asarray(y0, dtype=float)
    ny0 = lq_norm(grid, y0)
    if ny0 == 0.0:
        tg = TimeGrid.with_steps(1, dt)
        zero = ControlSignal.zero(omega, tg, M, q)
        return TimeOptResult(0.0, zero, ((0.0, 0.0),), np.zeros(1), M, tol, tol_T, dt, (0.0, 0.0),
                             0.0, 0.0, degenerate=True)

    samples: dict[int, NormSample] = {}

    def N(k):
        if k not in samples:
            samples[k] = norm_sample(f, y0, k, dt, omega, tol, q)
            log.info("N(%.6g) = %.6g", k * dt, samples[k].value)
        return samples[k].value

    def curve():
        return tuple((samples[k].t_final, samples[k].value) for k in sorted(samples))

    if t_hi is None:
        t_hi = construct_admissible(f, y0, M, omega, dt, tol, q).total_time
    k_hi = max(1, int(round(t_hi / dt)))
    for _ in range(8):
        if N(k_hi) <= M:
            break
        k_hi *= 2
    else:
        raise BracketError(f"N(T) > M = {M} up to T = {k_hi * dt}", curve())

    k_lo = k_hi // 2
    while k_lo >= 1 and N(k_lo) <= M:
        k_hi = k_lo
        k_lo //= 2
    while k_lo >= 1 and (k_hi - k_lo) * dt > tol_T and k_hi - k_lo > 1:
        mid = (k_lo + k_hi) // 2
        if N(mid) <= M:
            k_hi = mid
        else:
            k_lo = mid

    best = samples[k_hi]
    control = best.control.with_bound(M)
    tg = control.tgrid
    replay = control_to_state(grid, tg, y0, control, f)
    residual = lq_norm(grid, replay.final)
    return TimeOptResult(
        T_star=tg.t_final,
        control=control,
        N_curve=curve(),
        saturation_profile=control.step_norms.copy(),
        M=M,
        tol=tol,
        tol_T=tol_T,
        dt=dt,
        bracket=(k_lo * dt, k_hi * dt),
        terminal_residual=residual,
        initial_norm=ny0,
        degenerate=k_lo < 1,
        evaluations=len(samples),
    )


# ---------------------------------------------------------------------------
# saturation diagnostic


@dataclass(frozen=True)
class SaturationReport:
    ratios: np.ndarray = field(repr=False)
    fraction_saturated: float
    fraction_saturated_trimmed: float
    violations: tuple
    threshold: float
    trim: int
    degenerate: bool = False

    @property
    def saturated(self) -> bool:
        return not self.degenerate and not self.violations

    def summary(self) -> dict:
        return {
            "fraction_saturated": self.fraction_saturated,
            "fraction_saturated_trimmed": self.fraction_saturated_trimmed,
            "violations": [list(v) for v in self.violations],
            "threshold": self.threshold,
            "trim": self.trim,
            "saturated": self.saturated,
            "degenerate": self.degenerate,
        }


def bang_bang_profile(
    result,
    M: float | None = None,
    threshold: float = SATURATION_THRESHOLD,
    min_violation_steps: int = MIN_VIOLATION_STEPS,
    trim: int = TRIM_STEPS,
) -> SaturationReport:
    """Per-step ``s_k = ||u_k|| / M`` and the runs where the bound is not attained.

    ``result`` is a ``TimeOptResult`` or a ``ControlSignal`` (then ``M``
    defaults to its bound).  A run of steps with ``s_k <= 1 - threshold``
    longer than ``min_violation_steps * dt`` is a violation.
    """
    if isinstance(result, TimeOptResult):
        control, M = result.control, result.M if M is None else M
        degenerate = result.degenerate and result.T_star == 0.0
    else:
        control = result
        M = control.bound_M if M is None else M
        degenerate = False
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"a finite positive bound M is needed, got {M}")
    ratios = control.step_norms / M
    if degenerate or not np.any(ratios):
        return SaturationReport(ratios, 0.0, 0.0, (), threshold, trim, degenerate=True)
    hit = np.abs(ratios - 1.0) <= threshold
    inner = hit[trim: len(hit) - trim] if len(hit) > 2 * trim else hit
    dt = control.tgrid.dt
    low = ratios <= 1.0 - threshold
    violations = []
    k = 0
    while k < low.size:
        if low[k]:
            j = k
            while j + 1 < low.size and low[j + 1]:
                j += 1
            if j - k + 1 > min_violation_steps:
                violations.append((k * dt, (j + 1) * dt))
            k = j + 1
        else:
            k += 1
    return SaturationReport(ratios, float(hit.mean()), float(inner.mean()), tuple(violations), threshold, trim)


# ---------------------------------------------------------------------------
# time-shift improvement


@dataclass(frozen=True, eq=False)
class ImprovementReport:
    T_original: float
    eps0: float
    E_star: TimeSet | None
    delta0: float
    delta: float
    control: ControlSignal | None
    T_new: float
    residual: float
    initial_norm: float
    max_norm: float
    corrector: NullControlCertificate | None = field(default=None, repr=False)
    continuity_modulus: tuple = ()
    degenerate: bool = False

    @property
    def E_star_measure(self) -> float:
        return 0.0 if self.E_star is None else self.E_star.discrete_measure

    def summary(self) -> dict:
        return {
            "T_original": self.T_original,
            "eps0": self.eps0,
            "E_star_measure": self.E_star_measure,
            "delta0": self.delta0,
            "delta": self.delta,
            "T_new": self.T_new,
            "residual": self.residual,
            "relative_residual": self.residual / self.initial_norm if self.initial_norm else 0.0,
            "max_norm": self.max_norm,
            "degenerate": self.degenerate,
        }


def _slack_set(norms, M, threshold, min_steps):
    """Largest ``eps0 * |E*|`` over thresholds; ``None`` when no set qualifies."""
    slack = M - norms
    best = None
    for eps in np.unique(slack[slack >= threshold * M]):
        members = slack >= eps
        count = int(members.sum())
        if count < min_steps:
            continue
        score = eps * count
        if best is None or score > best[0] * (1 + 1e-12):
            best = (score, float(eps), members)
    return None if best is None else best[1:]


def improve_control(
    f: Nonlinearity,
    y0,
    u: ControlSignal,
    T: float | None = None,
    omega: RegionMask | None = None,
    tol: float = DEFAULT_TOL,
    threshold: float = SATURATION_THRESHOLD,
    min_slack_steps: int = 5,
    n_candidates: int = DELTA_CANDIDATES,
) -> ImprovementReport:
    """Shorten the time of an admissible control with slack.

    Finds steps where ``||u_k|| <= M - eps0``, shifts the trajectory by
    ``delta0`` and corrects the jump ``y*(delta) - y*(delta0)`` with a null
    control supported on the shifted slack set.  The result reaches the
    tolerance at ``T - delta0 + delta``.

    Raises
    ------
    NotImprovable
        No slack set of at least ``min_slack_steps`` steps exists.
    ImprovementFailure
        Every time-shift candidate failed; carries the measured modulus
        ``delta -> ||y*(delta) - y*(delta0)||``.
    """
    omega = u.space_mask if omega is None else omega
    grid, tg = omega.grid, u.tgrid
    if T is not None and abs(T - tg.t_final) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T} does not match the control horizon {tg.t_final}")
    M = u.bound_M
    if not (M > 0 and math.isfinite(M)):
        raise ValueError("the control needs a finite bound M")
    y0 = np.asarray(y0, dtype=float)
    ny0 = lq_norm(grid, y0)
    ystar = control_to_state(grid, tg, y0, u, f)
    r0 = lq_norm(grid, ystar.final)
    if ny0 == 0.0:
        if np.any(u.values):
            raise ValueError("a nonzero control from y0 = 0 is not a valid starting point")
        return ImprovementReport(tg.t_final, 0.0, None, 0.0, 0.0, None, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    budget = tol * ny0 - r0
    if budget <= 0:
        raise ValueError(f"control does not reach the tolerance: residual {r0:.3e} > {tol * ny0:.3e}")

    found = _slack_set(u.step_norms, M, threshold, min_slack_steps)
    if found is None:
        raise NotImprovable(
            f"no set of >= {min_slack_steps} steps with ||u_k|| <= (1 - {threshold}) M", u.step_norms / M
        )
    eps0, members = found
    N = tg.n_steps
    E_star = TimeSet.from_step_flags(tg, members)
    n0 = max(1, int(members.sum()) // 4)
    shifted = TimeGrid.with_steps(N - n0, tg.dt)
    flags = members[n0:]
    if not flags.any():
        raise NotImprovable("slack set lies entirely in the first shift window", u.step_norms / M)
    E_shift = TimeSet.from_step_flags(shifted, flags)
    z_shift = ystar.values[n0:]

    cands = np.arange(n0 - 1, -1, -1)
    if cands.size > n_candidates:
        cands = np.unique(np.linspace(0, n0 - 1, n_candidates).round().astype(int))[::-1]
    modulus = []
    kappa = 0.0
    for nd in cands:
        w0 = ystar.values[nd] - ystar.values[n0]
        nw0 = lq_norm(grid, w0)
        modulus.append((float(nd * tg.dt), nw0))
        if kappa > 0 and kappa * nw0 > 2.0 * eps0:
            continue
        try:
            cert = semilinear_null_control(f, z_shift, w0, shifted, omega, E_shift, 0.9 * budget / nw0)
        except (ControlFailure, SolverError) as exc:
            log.debug("corrector failed at delta=%g: %s", nd * tg.dt, exc)
            continue
        kappa = max(kappa, cert.gain_estimate)
        if cert.value > eps0:
            continue
        n_new = N - n0 + nd
        tg_new = TimeGrid.with_steps(n_new, tg.dt)
        values = np.empty((n_new, grid.n_interior))
        values[:nd] = u.values[:nd]
        values[nd:] = u.values[n0:] + cert.control.values
        composite = ControlSignal(omega, TimeSet.full(tg_new), values, M, u.exponent_q)
        replay = control_to_state(grid, tg_new, y0, composite, f)
        residual = lq_norm(grid, replay.final)
        if residual > tol * ny0 or composite.max_norm > M:
            continue
        return ImprovementReport(
            T_original=tg.t_final,
            eps0=eps0,
            E_star=E_star,
            delta0=float(n0 * tg.dt),
            delta=float(nd * tg.dt),
            control=composite,
            T_new=tg_new.t_final,
            residual=residual,
            initial_norm=ny0,
            max_norm=composite.max_norm,
            corrector=cert,
            continuity_modulus=tuple(modulus),
        )
    raise ImprovementFailure(
        f"no shift delta in [0, {n0 * tg.dt:.6g}) gave an admissible corrector", tuple(modulus)
    )
