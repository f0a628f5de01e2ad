"""Hot time-marching kernels.

Every solve in the package ends up here: a backward Euler step for the 1D
Dirichlet heat operator is a symmetric tridiagonal system, and a full
trajectory is a sequential march over time steps.  Two interchangeable
implementations are provided:

* a numba ``@njit`` path (Thomas algorithm in compiled loops), and
* a numpy/scipy path (``scipy.linalg.solve_banded`` per step).

The numba path is used when numba imports and the environment variable
``BANGBANG_HEAT_NUMBA`` is not set to ``0``.  Both paths are always importable
as ``*_numba`` / ``*_numpy`` so they can be compared directly.
"""

import os

import numpy as np
from scipy.linalg import solve_banded

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


USE_NUMBA = HAS_NUMBA and os.environ.get("BANGBANG_HEAT_NUMBA", "1") != "0"

# status codes shared by both semilinear paths
OK = 0
NEWTON_FAILED = 1
BLOW_UP = 2

# nonlinearity codes understood by the kernels
KIND_ZERO = 0
KIND_CUBIC = 1
KIND_ODD_POWER = 2
KIND_SATURATING = 3
KIND_TABLE = 4

MAX_HALVINGS = 20
NEWTON_MAXITER = 60


# ---------------------------------------------------------------------------
# nonlinearity evaluation (numba-compatible numpy code, used by both paths)


def _f_values(kind, power, xs, ys, y):
    if kind == KIND_ZERO:
        return np.zeros_like(y)
    if kind == KIND_CUBIC:
        return y * y * y
    if kind == KIND_ODD_POWER:
        return np.abs(y) ** (power - 1.0) * y
    if kind == KIND_SATURATING:
        a = np.abs(y)
        return y * a / (1.0 + a)
    return np.interp(y, xs, ys)


def _f_slopes(kind, power, xs, ys, y):
    if kind == KIND_ZERO:
        return np.zeros_like(y)
    if kind == KIND_CUBIC:
        return 3.0 * y * y
    if kind == KIND_ODD_POWER:
        return power * np.abs(y) ** (power - 1.0)
    if kind == KIND_SATURATING:
        a = 1.0 + np.abs(y)
        return 1.0 - 1.0 / (a * a)
    out = np.zeros_like(y)
    m = xs.shape[0]
    for i in range(y.shape[0]):
        v = y[i]
        if v < xs[0] or v > xs[m - 1]:
            continue
        j = np.searchsorted(xs, v, side="right") - 1
        if j >= m - 1:
            j = m - 2
        out[i] = (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])
    return out


_f_values_nb = njit(cache=True)(_f_values)
_f_slopes_nb = njit(cache=True)(_f_slopes)


def _truncated(kind, power, xs, ys, y, cap):
    """Values and slopes of f clipped to [-cap, cap] (constant outside)."""
    clipped = np.minimum(np.maximum(y, -cap), cap)
    vals = _f_values(kind, power, xs, ys, clipped)
    slopes = np.where(np.abs(y) > cap, 0.0, _f_slopes(kind, power, xs, ys, clipped))
    return vals, slopes


@njit(cache=True)
def _truncated_nb(kind, power, xs, ys, y, cap):
    clipped = np.minimum(np.maximum(y, -cap), cap)
    vals = _f_values_nb(kind, power, xs, ys, clipped)
    slopes = np.where(np.abs(y) > cap, 0.0, _f_slopes_nb(kind, power, xs, ys, clipped))
    return vals, slopes


# ---------------------------------------------------------------------------
# numba path


@njit(cache=True)
def _thomas_nb(off, diag, rhs, out):
    """Solve a symmetric tridiagonal system with constant off-diagonal."""
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    m = diag[0]
    cp[0] = off / m
    dp[0] = rhs[0] / m
    for i in range(1, n):
        m = diag[i] - off * cp[i - 1]
        cp[i] = off / m
        dp[i] = (rhs[i] - off * dp[i - 1]) / m
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]


@njit(cache=True)
def march_linear_numba(extra, src, z0, dt, h, substeps):
    n_steps, n = extra.shape
    out = np.empty((n_steps + 1, n))
    out[0, :] = z0
    ds = dt / substeps
    off = -ds / (h * h)
    base = 1.0 + 2.0 * ds / (h * h)
    z = z0.copy()
    rhs = np.empty(n)
    diag = np.empty(n)
    for k in range(n_steps):
        for i in range(n):
            diag[i] = base + ds * extra[k, i]
        for _ in range(substeps):
            for i in range(n):
                rhs[i] = z[i] + ds * src[k, i]
            _thomas_nb(off, diag, rhs, z)
        out[k + 1, :] = z
    return out


@njit(cache=True)
def _newton_step_nb(kind, power, xs, ys, bg, y_prev, g, ds, h, y_out):
    """One implicit substep; returns True on convergence."""
    n = y_prev.shape[0]
    cap = np.max(np.abs(bg)) + np.max(np.abs(y_prev)) + ds * np.max(np.abs(g)) + 1.0
    off = -ds / (h * h)
    base = 1.0 + 2.0 * ds / (h * h)
    f_bg, _ = _truncated_nb(kind, power, xs, ys, bg, cap)
    y = y_prev.copy()
    res = np.empty(n)
    diag = np.empty(n)
    delta = np.empty(n)
    for _ in range(NEWTON_MAXITER):
        f_y, df_y = _truncated_nb(kind, power, xs, ys, bg + y, cap)
        for i in range(n):
            lap = -2.0 * y[i]
            if i > 0:
                lap += y[i - 1]
            if i < n - 1:
                lap += y[i + 1]
            res[i] = y[i] - y_prev[i] - ds * lap / (h * h) + ds * (f_y[i] - f_bg[i] - g[i])
            diag[i] = base + ds * df_y[i]
        _thomas_nb(off, diag, res, delta)
        step = 0.0
        size = 1.0
        for i in range(n):
            y[i] -= delta[i]
            step = max(step, abs(delta[i]))
            size = max(size, abs(y[i]))
        if not np.all(np.isfinite(y)):
            return False
        if step <= 1e-14 * size:
            y_out[:] = y
            return True
    return False


@njit(cache=True)
def march_semilinear_numba(kind, power, xs, ys, background, src, y0, dt, h, blow_limit):
    n_steps, n = src.shape
    out = np.empty((n_steps + 1, n))
    out[0, :] = y0
    y = y0.copy()
    trial = np.empty(n)
    for k in range(n_steps):
        ok = False
        substeps = 1
        for _ in range(MAX_HALVINGS + 1):
            cur = y.copy()
            ok = True
            ds = dt / substeps
            for _s in range(substeps):
                if not _newton_step_nb(kind, power, xs, ys, background[k], cur, src[k], ds, h, trial):
                    ok = False
                    break
                cur[:] = trial
            if ok:
                y = cur
                break
            substeps *= 2
        if not ok:
            return out, NEWTON_FAILED, k
        out[k + 1, :] = y
        if np.max(np.abs(y)) > blow_limit:
            return out, BLOW_UP, k
    return out, OK, -1


# ---------------------------------------------------------------------------
# numpy / scipy path


def _banded(off, diag):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag
    ab[2, :-1] = off
    return ab


def march_linear_numpy(extra, src, z0, dt, h, substeps):
    n_steps, n = extra.shape
    out = np.empty((n_steps + 1, n))
    out[0] = z0
    ds = dt / substeps
    off = -ds / (h * h)
    base = 1.0 + 2.0 * ds / (h * h)
    z = np.array(z0, dtype=float)
    for k in range(n_steps):
        ab = _banded(off, base + ds * extra[k])
        for _ in range(substeps):
            z = solve_banded((1, 1), ab, z + ds * src[k])
        out[k + 1] = z
    return out


def _newton_step_numpy(kind, power, xs, ys, bg, y_prev, g, ds, h):
    cap = np.max(np.abs(bg)) + np.max(np.abs(y_prev)) + ds * np.max(np.abs(g)) + 1.0
    off = -ds / (h * h)
    base = 1.0 + 2.0 * ds / (h * h)
    f_bg, _ = _truncated(kind, power, xs, ys, bg, cap)
    y = y_prev.copy()
    for _ in range(NEWTON_MAXITER):
        f_y, df_y = _truncated(kind, power, xs, ys, bg + y, cap)
        lap = -2.0 * y
        lap[1:] += y[:-1]
        lap[:-1] += y[1:]
        res = y - y_prev - ds * lap / (h * h) + ds * (f_y - f_bg - g)
        delta = solve_banded((1, 1), _banded(off, base + ds * df_y), res)
        y = y - delta
        if not np.all(np.isfinite(y)):
            return None
        if np.max(np.abs(delta)) <= 1e-14 * max(1.0, np.max(np.abs(y))):
            return y
    return None


def march_semilinear_numpy(kind, power, xs, ys, background, src, y0, dt, h, blow_limit):
    n_steps, n = src.shape
    out = np.empty((n_steps + 1, n))
    out[0] = y0
    y = np.array(y0, dtype=float)
    for k in range(n_steps):
        substeps = 1
        new = None
        for _ in range(MAX_HALVINGS + 1):
            cur = y
            ds = dt / substeps
            for _s in range(substeps):
                cur = _newton_step_numpy(kind, power, xs, ys, background[k], cur, src[k], ds, h)
                if cur is None:
                    break
            if cur is not None:
                new = cur
                break
            substeps *= 2
        if new is None:
            return out, NEWTON_FAILED, k
        y = new
        out[k + 1] = y
        if np.max(np.abs(y)) > blow_limit:
            return out, BLOW_UP, k
    return out, OK, -1


if USE_NUMBA:
    march_linear = march_linear_numba
    march_semilinear = march_semilinear_numba
else:
    march_linear = march_linear_numpy
    march_semilinear = march_semilinear_numpy
