"""Batch front end: ``bangbang-heat <task> CONFIG`` and ``bangbang-heat verify MANIFEST``.

Exit codes
----------
0 success, 1 verification failed, 2 config error, 3 solver non-convergence,
4 infeasible problem, 5 blow-up guard.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as bio
from .config import TASKS, ConfigError, ConfigSyntaxError, ExperimentConfig, load_config, validate
from .control import (
    ControlFailure,
    SignConditionViolation,
    min_norm_control_linear,
    semilinear_null_control,
)
from .mesh import TimeGrid, TimeSet, lq_norm
from .observability import estimate_constant, nested_estimates, scaling_study
from .pde import BlowUpError, SolverError, control_to_state, solve_semilinear
from .timeopt import (
    BracketError,
    ImprovementFailure,
    NotImprovable,
    bang_bang_profile,
    improve_control,
    optimal_time,
)

log = logging.getLogger("bangbang_heat")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INFEASIBLE = 4
EXIT_BLOWUP = 5
MANIFEST = "manifest.json"
REPLAY_MATCH_TOL = 1e-9


class Infeasible(RuntimeError):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ConfigSyntaxError)):
        return EXIT_CONFIG
    if isinstance(exc, BlowUpError):
        return EXIT_BLOWUP
    if isinstance(exc, (BracketError, SignConditionViolation, Infeasible)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (ControlFailure, SolverError, ImprovementFailure)):
        return EXIT_SOLVER
    raise exc


@dataclass
class RunManifest:
    config: dict
    files: list = field(default_factory=list)
    stages: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    claims: dict = field(default_factory=dict)
    version: str = __version__
    status: str = "ok"
    exit_code: int = 0
    error: str = ""

    def as_dict(self) -> dict:
        return {
            "config": self.config, "files": self.files, "stages": self.stages,
            "iterations": self.iterations, "claims": self.claims, "version": self.version,
            "status": self.status, "exit_code": self.exit_code, "error": self.error,
        }


class _Writer:
    """Serializes every file write of a run and records it for the manifest."""

    def __init__(self, directory: Path, formats):
        self.dir = directory
        self.formats = set(formats)
        self.written: list[Path] = []
        directory.mkdir(parents=True, exist_ok=True)

    def _record(self, path):
        self.written.append(path)

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            path = self.dir / name
            path.write_text(bio.csv_text(header, rows), encoding="utf-8")
            self._record(path)

    def json(self, name, doc):
        if "json" in self.formats:
            path = self.dir / name
            path.write_text(bio.json_text(doc), encoding="utf-8")
            self._record(path)

    def binary(self, name, saver, *args):
        if "npz" in self.formats:
            path = self.dir / name
            saver(path, *args)
            self._record(path)

    def entries(self):
        return [
            {"name": p.name, "sha256": bio.sha256_of(p), "bytes": p.stat().st_size, "rows": bio.count_rows(p)}
            for p in self.written
        ]

    def mark_partial(self):
        for p in self.written:
            if p.exists():
                p.rename(p.with_name(p.name + ".partial"))


def _rng_streams(seed: int, n: int):
    """Independent Philox streams split from one seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


# ---------------------------------------------------------------------------
# tasks


def _task_simulate(cfg: ExperimentConfig, w: _Writer, man: RunManifest):
    tg = cfg.tgrid()
    traj = solve_semilinear(cfg.grid, tg, cfg.nonlinearity, None, cfg.y0)
    w.csv("trajectory.csv", ("t", "x", "value"), bio.trajectory_rows(traj))
    w.binary("trajectory.npz", bio.save_trajectory, traj)
    norms = traj.norms()
    w.json("summary.json", {"task": "simulate", "T": tg.t_final, "n_steps": tg.n_steps,
                            "final_norm": float(norms[-1]), "initial_norm": float(norms[0]),
                            "sup_norm": traj.sup_norm})
    man.claims["trajectory"] = {"file": "trajectory.npz"}


def _control_outputs(w, control, y0, prefix="control"):
    tg = control.tgrid
    w.csv(f"{prefix}_norms.csv", ("t", "norm"), zip(tg.step_midpoints, control.step_norms))
    w.binary(f"{prefix}.npz", bio.save_control, control, y0)


def _task_null_control(cfg, w, man):
    tg = cfg.tgrid()
    E = cfg.time_set(tg)
    f = cfg.nonlinearity
    if f.is_zero:
        cert = min_norm_control_linear(0.0, cfg.y0, tg, cfg.region, E, cfg.tol,
                                       method=cfg.params.get("method", "newton"))
    else:
        cert = semilinear_null_control(f, None, cfg.y0, tg, cfg.region, E, cfg.tol)
    control = cert.control if cfg.M is None else cert.control.with_bound(max(cfg.M, cert.value))
    _control_outputs(w, control, cfg.y0)
    w.json("summary.json", {"task": "null-control", **cert.summary()})
    man.iterations["null_control"] = cert.iterations
    man.claims["control"] = {"file": "control.npz", "tol": cfg.tol,
                             "max_norm": cert.value if cfg.M is None else cfg.M}


def _optimal(cfg, M):
    kw = {"tol_T": float(cfg.params.get("tol_T", 0.01)), "tol": cfg.tol, "dt": cfg.dt, "q": cfg.q}
    if "t_hi" in cfg.params:
        kw["t_hi"] = float(cfg.params["t_hi"])
    return optimal_time(cfg.nonlinearity, cfg.y0, M, cfg.region, **kw)


def _task_time_optimal(cfg, w, man):
    res = _optimal(cfg, cfg.M)
    prof = bang_bang_profile(res)
    w.csv("n_curve.csv", ("T", "N"), res.N_curve)
    w.csv("saturation.csv", ("t", "ratio"), zip(res.control.tgrid.step_midpoints, prof.ratios))
    _control_outputs(w, res.control, cfg.y0)
    w.json("summary.json", {"task": "time-optimal", **res.summary(), "saturation": prof.summary()})
    man.iterations["norm_evaluations"] = res.evaluations
    man.claims["control"] = {"file": "control.npz", "tol": cfg.tol, "max_norm": cfg.M}


def _task_improve(cfg, w, man):
    if "control_file" in cfg.params:
        control, y0 = bio.load_control(cfg.base_dir / str(cfg.params["control_file"]))
        if y0 is None:
            y0 = cfg.y0
        control = control.with_bound(cfg.M)
    else:
        frac = float(cfg.params["source_bound_fraction"])
        src = _optimal(cfg, frac * cfg.M)
        control, y0 = src.control.with_bound(cfg.M), cfg.y0
    _control_outputs(w, control, y0, prefix="source_control")
    try:
        rep = improve_control(cfg.nonlinearity, y0, control, None, cfg.region, cfg.tol)
    except NotImprovable as exc:
        w.json("improvement.json", {"task": "improve", "status": "not_improvable", "reason": str(exc),
                                    "T_original": control.tgrid.t_final})
        return
    if rep.control is not None:
        _control_outputs(w, rep.control, y0)
        man.claims["control"] = {"file": "control.npz", "tol": cfg.tol, "max_norm": cfg.M}
    w.json("improvement.json", {"task": "improve", "status": "improved", **rep.summary()})


def _observability_sets(cfg, tg):
    fam = cfg.params.get("E_family")
    if fam is None:
        return [cfg.time_set(tg)]
    return [TimeSet(tg, ((0.0, float(b)),)) for b in sorted(fam, reverse=True)]


def _task_observability(cfg, w, man):
    T = float(cfg.params["T"])
    dt = float(cfg.params.get("dt_obs", cfg.dt))
    tg = TimeGrid.with_steps(max(1, int(round(T / dt))), dt)
    a = float(cfg.params.get("potential", 0.0))
    (rng,) = _rng_streams(cfg.seed, 1)
    kw = {"n_modes": int(cfg.params.get("n_modes", 24)), "n_restarts": int(cfg.params.get("n_restarts", 8)),
          "rng": rng}
    ests = nested_estimates(a, cfg.region, _observability_sets(cfg, tg), **kw)
    rows = [tuple(e.row().values()) for e in ests]
    w.csv("estimates.csv", tuple(ests[0].row().keys()), rows)
    best = ests[0]
    w.csv("maximizer.csv", ("x", "value"), zip(cfg.grid.node_coords, best.phi0))
    w.json("summary.json", {"task": "observability", "estimates": [e.row() for e in ests]})


def _task_scaling(cfg, w, man):
    mags = [float(s) for s in cfg.params["magnitudes"]]
    T = float(cfg.params["T"])
    kw = {"n_modes": int(cfg.params.get("n_modes", 24)), "n_restarts": int(cfg.params.get("n_restarts", 8))}
    if "dt_obs" in cfg.params:
        kw["dt"] = float(cfg.params["dt_obs"])
    E = cfg.params.get("E")
    streams = _rng_streams(cfg.seed, len(mags))

    def one(i):
        return scaling_study([mags[i]], cfg.region, T, E, rng=streams[i], **kw).rows

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(pool.map(one, range(len(mags))))
    rows = [r for part in parts for r in part]
    study = _fit_rows(rows)
    w.csv("scaling.csv", ("s", "C_hat", "log_C_hat", "x"), study.rows)
    w.json("summary.json", {"task": "scaling-study", "alpha": study.alpha, "beta": study.beta,
                            "residual": study.residual, "relative_residual": study.relative_residual,
                            "envelope_ok": study.envelope_ok(), "flagged": list(study.flagged)})


def _fit_rows(rows):
    from .observability import ScalingStudy

    if len(rows) >= 2:
        X = np.array([[1.0, r[3]] for r in rows])
        y = np.array([r[2] for r in rows])
        (alpha, beta), *_ = np.linalg.lstsq(X, y, rcond=None)
        res = float(np.linalg.norm(X @ np.array([alpha, beta]) - y))
    else:
        alpha, beta, res = (rows[0][2] if rows else math.nan), 0.0, 0.0
    return ScalingStudy(tuple(rows), float(alpha), float(beta), res)


TASK_RUNNERS = {
    "simulate": _task_simulate,
    "null-control": _task_null_control,
    "time-optimal": _task_time_optimal,
    "improve": _task_improve,
    "observability": _task_observability,
    "scaling-study": _task_scaling,
}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Run one configured task; files land in ``cfg.output_dir``.

    On failure every file written so far is renamed with a ``.partial``
    suffix and the manifest records the exit code.
    """
    man = RunManifest(config=cfg.echo())
    w = _Writer(cfg.output_dir, cfg.formats)
    t0 = time.perf_counter()
    try:
        TASK_RUNNERS[cfg.task](cfg, w, man)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        man.exit_code = exit_code_for(exc)
        man.status = "failed"
        man.error = f"{type(exc).__name__}: {exc}"
        man.stages[cfg.task] = time.perf_counter() - t0
        w.mark_partial()
        (cfg.output_dir / (MANIFEST + ".partial")).write_text(bio.json_text(man.as_dict()), encoding="utf-8")
        return man
    man.stages[cfg.task] = time.perf_counter() - t0
    man.files = w.entries()
    (cfg.output_dir / MANIFEST).write_text(bio.json_text(man.as_dict()), encoding="utf-8")
    return man


# ---------------------------------------------------------------------------
# verification


def verify(manifest_path) -> list[tuple[str, bool, str]]:
    """Re-check a finished run from its files alone.

    Returns ``(claim, passed, detail)`` triples: file integrity, and for
    exported controls an independent replay of the terminal residual and
    the per-step bound.
    """
    import json

    manifest_path = Path(manifest_path)
    out = []
    try:
        man = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        return [("manifest readable", False, str(exc))]
    base = manifest_path.parent
    for entry in man.get("files", []):
        p = base / entry["name"]
        if not p.exists():
            out.append((f"file {entry['name']}", False, "missing"))
            continue
        if p.stat().st_size == 0:
            out.append((f"file {entry['name']}", False, "empty"))
            continue
        ok = bio.sha256_of(p) == entry["sha256"]
        detail = "sha256 matches" if ok else "sha256 mismatch"
        if ok and entry.get("rows") is not None:
            rows = bio.count_rows(p)
            ok = rows == entry["rows"]
            detail = f"{rows} rows" if ok else f"{rows} rows, expected {entry['rows']}"
        out.append((f"file {entry['name']}", ok, detail))
    try:
        cfg = validate(man["config"], base_dir=base)
    except (ConfigError, KeyError) as exc:
        out.append(("config echo valid", False, str(exc)))
        return out
    claims = man.get("claims", {})
    if "control" in claims:
        out.extend(_verify_control(cfg, base, claims["control"]))
    if "trajectory" in claims:
        out.extend(_verify_trajectory(cfg, base, claims["trajectory"]))
    return out


def _verify_control(cfg, base, claim):
    p = base / claim["file"]
    try:
        control, y0 = bio.load_control(p)
    except Exception as exc:  # noqa: BLE001 - any unreadable file is a failed claim
        return [("control replay", False, f"cannot load {claim['file']}: {exc}")]
    y0 = cfg.y0 if y0 is None else y0
    traj = control_to_state(control.grid, control.tgrid, y0, control, cfg.nonlinearity)
    residual = lq_norm(control.grid, traj.final)
    target = claim["tol"] * lq_norm(control.grid, y0)
    bound = claim["max_norm"]
    mx = control.max_norm
    return [
        ("terminal residual", residual <= target, f"{residual:.6e} vs {target:.6e}"),
        ("norm bound", mx <= bound * (1 + REPLAY_MATCH_TOL), f"max ||u_k|| {mx:.6e} vs {bound:.6e}"),
    ]


def _verify_trajectory(cfg, base, claim):
    try:
        stored = bio.load_trajectory(base / claim["file"])
    except Exception as exc:  # noqa: BLE001
        return [("trajectory replay", False, f"cannot load {claim['file']}: {exc}")]
    fresh = solve_semilinear(stored.grid, stored.tgrid, cfg.nonlinearity, None, cfg.y0)
    err = float(np.max(np.abs(fresh.values - stored.values)))
    return [("trajectory replay", err <= REPLAY_MATCH_TOL, f"max deviation {err:.3e}")]


# ---------------------------------------------------------------------------
# entry point


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigSyntaxError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bangbang-heat", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in TASKS + ("run",):
        p = sub.add_parser(name, help=f"run the {name} task" if name != "run" else "run the task named in the config")
        p.add_argument("config", type=Path)
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
        p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int)
    p = sub.add_parser("verify", help="replay and re-check a run manifest")
    p.add_argument("manifest", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.command == "verify":
        results = verify(args.manifest)
        for claim, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {claim}: {detail}")
        return EXIT_OK if results and all(ok for _, ok, _ in results) else EXIT_VERIFY_FAILED
    try:
        overrides = _overrides(args.set)
        if args.command != "run":
            overrides["task.kind"] = repr(args.command)
        if args.seed is not None:
            overrides["run.seed"] = str(args.seed)
        cfg = load_config(args.config, overrides)
    except (ConfigError, ConfigSyntaxError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is not None:
        cfg = _with_output(cfg, args.out)
    man = run(cfg)
    if man.exit_code:
        print(f"{cfg.task} failed ({man.error}); exit {man.exit_code}", file=sys.stderr)
    else:
        print(f"{cfg.task}: wrote {len(man.files)} files to {cfg.output_dir}")
    return man.exit_code


def _with_output(cfg, path):
    from dataclasses import replace

    return replace(cfg, output_dir=Path(path))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
