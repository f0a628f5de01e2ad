"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (printed at the end of the run by
the terminal summary hook, and to stdout with ``-s``) and then asserts.
"""

import json
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from bangbang_heat import cli
from bangbang_heat.control import min_norm_control_linear, semilinear_null_control
from bangbang_heat.mesh import Grid1D, RegionMask, TimeGrid, TimeSet, first_eigenvalue, inner_product, lq_norm
from bangbang_heat.nonlinearity import Nonlinearity
from bangbang_heat.observability import estimate_constant, nested_estimates, scaling_study
from bangbang_heat.pde import adjoint_backward, control_to_state, solve_linear, solve_semilinear
from bangbang_heat.timeopt import NotImprovable, bang_bang_profile, improve_control, optimal_time

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CUBIC = Nonlinearity.cubic()
ZERO = Nonlinearity.zero()


def record(number, name, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def random_modes(rng, grid, n_modes=5, scale=1.0):
    k = np.arange(1, n_modes + 1)[:, None]
    return scale * rng.standard_normal(n_modes) @ np.sin(k * np.pi * grid.node_coords[None, :])


def test_criterion_01_eigenmode():
    g, tg = Grid1D(199), TimeGrid(0.1, 1000)
    x = g.node_coords
    t0 = time.perf_counter()
    z = solve_linear(g, tg, 0.0, None, np.sin(np.pi * x))
    elapsed = time.perf_counter() - t0
    exact = math.exp(-np.pi**2 * 0.1) * np.sin(np.pi * x)
    err = lq_norm(g, z.final - exact) / lq_norm(g, exact)
    ok = err <= 0.01 and elapsed < 1.0
    assert record(1, "eigenmode accuracy", ok, f"rel L2 error {err:.2e} <= 1e-2, {elapsed:.3f} s < 1 s")


def test_criterion_02_comparison(standard):
    g, tg = standard["grid"], standard["tgrid"]
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = -math.inf
    for i in range(20):
        y0 = random_modes(rng, g, 6, scale=3.0)
        src = rng.standard_normal((tg.n_steps, g.n_interior)) * rng.uniform(0.5, 5.0)
        y = solve_semilinear(g, tg, CUBIC, src, y0).values
        psi = solve_linear(g, tg, 0.0, np.abs(src), np.abs(y0)).values
        worst = max(worst, float(np.max(np.abs(y) - psi)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    assert record(2, "comparison principle", ok, f"max(|y| - psi) = {worst:.2e} <= 1e-8 over 20 cases, {elapsed:.2f} s")


def test_criterion_03_decay(standard):
    g, tg = standard["grid"], standard["tgrid"]
    rng = np.random.default_rng(3)
    lam = first_eigenvalue(g)
    worst = -math.inf
    worst_discrete = -math.inf
    for i in range(10):
        y0 = random_modes(rng, g, 5)
        norms = solve_semilinear(g, tg, CUBIC, None, y0).norms()
        worst = max(worst, float(np.max(norms - np.exp(-lam * tg.times) * norms[0])))
        discrete = (1 + tg.dt * lam) ** -np.arange(tg.n_steps + 1.0) * norms[0]
        worst_discrete = max(worst_discrete, float(np.max(norms - discrete)))
    ok = worst <= 1e-8
    assert record(3, "decay estimate", ok,
                  f"max excess over exp(-lam1 t)||y0|| = {worst:.2e} <= 1e-8; discrete-factor excess {worst_discrete:.2e}")


def test_criterion_04_adjoint_identity(standard):
    g, tg, om = standard["grid"], standard["tgrid"], standard["omega"]
    rng = np.random.default_rng(4)
    worst = 0.0
    for i in range(50):
        u = rng.standard_normal((tg.n_steps, g.n_interior)) * om.member_flags
        phiT = rng.standard_normal(g.n_interior)
        z = control_to_state(g, tg, np.zeros(g.n_interior), u)
        psi = adjoint_backward(g, tg, 0.0, phiT)
        lhs = inner_product(g, z.final, phiT)
        rhs = tg.dt * g.h * float(np.sum(u * psi[:-1]))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    assert record(4, "adjoint identity", worst <= 1e-12, f"max relative gap {worst:.2e} <= 1e-12 over 50 pairs")


def test_criterion_05_oracle():
    g = Grid1D(9)
    om = RegionMask(g, (0.3, 0.7))
    tg = TimeGrid(0.5, 12)
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(5):
        w0 = random_modes(rng, g, 4)
        ref = oracles.min_max_norm(9, 12, 0.5, om.member_flags, w0)
        # the oracle imposes z_N = 0 exactly; a tight terminal tolerance makes the problems comparable
        val = min_norm_control_linear(0.0, w0, tg, om, tol=1e-8).value
        worst = max(worst, abs(val - ref) / ref)
    assert record(5, "oracle equivalence", worst <= 0.02, f"max relative gap {worst:.2e} <= 2e-2 over 5 data")


def test_criterion_06_null_control(standard):
    s = standard
    t0 = time.perf_counter()
    cert = min_norm_control_linear(0.0, s["y0"], s["tgrid"], s["omega"])
    elapsed = time.perf_counter() - t0
    norms = cert.control.step_norms
    spread = float(np.ptp(norms) / norms.max())
    ok = cert.relative_residual <= 1e-3 and spread <= 1e-6 and elapsed < 60
    assert record(6, "null-control residual", ok,
                  f"residual {cert.relative_residual:.2e} <= 1e-3, norm spread {spread:.1e} <= 1e-6, {elapsed:.2f} s")


def test_criterion_07_semilinear(standard):
    s = standard
    w0 = 1e-2 * s["y0"]
    cert = semilinear_null_control(CUBIC, None, w0, s["tgrid"], s["omega"])
    lin = min_norm_control_linear(0.0, w0, s["tgrid"], s["omega"])
    gain_gap = abs(cert.gain_estimate - lin.gain_estimate) / lin.gain_estimate
    ok = cert.iterations <= 25 and cert.pde_residual <= 10 * cert.tol and gain_gap <= 0.1 and cert.success
    assert record(7, "semilinear fixed point", ok,
                  f"{cert.iterations} iterations <= 25, pde residual {cert.pde_residual:.1e} <= {10 * cert.tol:.0e}, "
                  f"gain gap {gain_gap:.1e} <= 0.1")


@pytest.fixture(scope="module")
def headline():
    g = Grid1D(99)
    om = RegionMask(g, (0.3, 0.7))
    y0 = np.sin(np.pi * g.node_coords)
    t0 = time.perf_counter()
    res = optimal_time(ZERO, y0, 1.0, om, tol_T=0.005)
    return g, om, y0, res, time.perf_counter() - t0


def test_criterion_08_bang_bang(headline):
    g, om, y0, res, elapsed = headline
    rep = bang_bang_profile(res)
    ok = (0.1 <= res.T_star <= 1.0 and rep.fraction_saturated_trimmed >= 0.9 and res.n_curve_monotone
          and elapsed < 600)
    assert record(8, "bang-bang headline", ok,
                  f"T* = {res.T_star:.4g}, {100 * rep.fraction_saturated_trimmed:.1f}% interior steps saturated >= 90%, "
                  f"N curve nonincreasing = {res.n_curve_monotone}, {elapsed:.1f} s")


def test_criterion_09_improvement(headline):
    g, om, y0, res, _ = headline
    M = res.M
    slack = optimal_time(ZERO, y0, 0.8 * M, om, tol_T=0.005)
    rep = improve_control(ZERO, y0, slack.control.with_bound(M), slack.T_star, om)
    replay = control_to_state(g, rep.control.tgrid, y0, rep.control)
    residual = lq_norm(g, replay.final) / lq_norm(g, y0)
    try:
        improve_control(ZERO, y0, res.control, res.T_star, om)
        genuine = False
    except NotImprovable:
        genuine = True
    ok = rep.T_new < slack.T_star and residual <= 1e-3 and rep.control.max_norm <= M and genuine
    assert record(9, "improvement construction", ok,
                  f"T {slack.T_star:.4g} -> {rep.T_new:.4g}, replay residual {residual:.1e} <= 1e-3, "
                  f"max norm {rep.control.max_norm:.3f} <= {M}, optimal control not improvable = {genuine}")


def test_criterion_10_observability():
    g, tg = Grid1D(199), TimeGrid(0.1, 1000)
    est = estimate_constant(0.0, RegionMask.full(g), TimeSet.full(tg), n_modes=6, n_restarts=2)
    mass = (2 / math.pi) * (1 - math.exp(-math.pi**2 * 0.1)) / math.pi**2
    closed = math.exp(-math.pi**2 * 0.1) / math.sqrt(2) / mass
    mode_gap = abs(est.start_ratios[("mode", 1)] / closed - 1)

    g99 = Grid1D(99)
    om = RegionMask(g99, (0.3, 0.7))
    tg99 = TimeGrid(0.5, 250)
    sets = [TimeSet(tg99, ((0.5 - w, 0.5),)) for w in (0.5, 0.4, 0.3, 0.2, 0.1)]
    C = [e.C_hat for e in nested_estimates(0.0, om, sets, n_modes=12, n_restarts=4)]
    monotone = all(b >= a - 1e-6 for a, b in zip(C, C[1:]))

    study = scaling_study(np.logspace(0, 2, 5), om, 0.5, n_modes=12, n_restarts=4, rng=np.random.default_rng(10))
    completed = len(study.rows) == 5 and not study.flagged
    envelope = study.envelope_ok(1.1)
    worst = max(c / math.exp(study.alpha + study.beta * x) for _, c, _, x in study.rows)
    ok = mode_gap <= 0.02 and monotone and completed and envelope
    assert record(10, "observability sanity", ok,
                  f"mode-1 gap {mode_gap:.1e} <= 2e-2, nested monotone = {monotone}, scaling completed = {completed}, "
                  f"max C_hat / fit = {worst:.2f} <= 1.1")


def _run_suite(root):
    out = {}
    for cfg in sorted(CONFIGS.glob("*.ini")):
        d = root / cfg.stem
        code = cli.main(["run", str(cfg), "--out", str(d)])
        out[cfg.stem] = (code, d)
    return out


def test_criterion_11_determinism_and_verify(tmp_path):
    first, second = _run_suite(tmp_path / "a"), _run_suite(tmp_path / "b")
    codes_ok = all(code == 0 for code, _ in list(first.values()) + list(second.values()))
    identical = True
    n_csv = 0
    for name, (_, d) in first.items():
        for p in sorted(d.glob("*.csv")):
            n_csv += 1
            identical &= p.read_bytes() == (second[name][1] / p.name).read_bytes()
    verified = all(all(ok for _, ok, _ in cli.verify(d / "manifest.json")) for _, d in first.values())

    scaled = shutil.copytree(first["time_optimal"][1], tmp_path / "scaled")
    with np.load(scaled / "control.npz") as z:
        data = {k: z[k] for k in z.files}
    data["values"] = data["values"] * 1.2
    with open(scaled / "control.npz", "wb") as fh:
        np.savez(fh, **data)
    scaled_fails = dict((c, ok) for c, ok, _ in cli.verify(scaled / "manifest.json"))["norm bound"] is False

    trunc = shutil.copytree(first["simulate"][1], tmp_path / "trunc")
    p = trunc / "trajectory.csv"
    p.write_bytes(p.read_bytes()[: p.stat().st_size // 2])
    trunc_fails = dict((c, ok) for c, ok, _ in cli.verify(trunc / "manifest.json"))["file trajectory.csv"] is False

    ok = codes_ok and identical and n_csv > 0 and verified and scaled_fails and trunc_fails
    assert record(11, "determinism and verify", ok,
                  f"{len(first)} configs x 2 runs, {n_csv} CSVs bit-identical = {identical}, verify all PASS = {verified}, "
                  f"scaled control FAIL = {scaled_fails}, truncated file FAIL = {trunc_fails}")
