"""Experiment configuration: INI-style text with Python-literal values.

The grammar is documented in ``docs/config_grammar.ebnf``.  Parsing reports
syntax errors with line and column; semantic validation collects every
violation before giving up.
"""

from __future__ import annotations

import ast
import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Grid1D, RegionMask, TimeGrid, TimeSet
from .nonlinearity import KINDS, Nonlinearity, SignConditionError

TASKS = ("simulate", "null-control", "time-optimal", "improve", "observability", "scaling-study")
SECTIONS = {
    "problem": {"n", "dt", "n_steps", "nonlinearity", "power", "table_x", "table_y",
                "y0_modes", "y0_nodes", "omega", "q", "M"},
    "task": {"kind", "T", "tol", "tol_T", "E", "method", "control_file", "source_bound_fraction",
             "n_modes", "n_restarts", "E_family", "magnitudes", "potential", "t_hi", "dt_obs"},
    "output": {"directory", "formats"},
    "run": {"seed", "workers"},
}
FORMATS = ("csv", "json", "npz")
_BARE = re.compile(r"^[A-Za-z_./][\w./\-]*$")


class ConfigSyntaxError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = f"line {line}" + (f", column {column}" if column is not None else "") if line else "input"
        super().__init__(f"{where}: {message}")
        self.line, self.column = line, column


class ConfigError(ValueError):
    """All semantic violations found in a config."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    n: int
    dt: float
    nonlinearity: Nonlinearity
    y0: np.ndarray = field(repr=False)
    omega: tuple
    q: float
    M: float | None
    task: str
    params: dict
    output_dir: Path
    formats: tuple
    seed: int
    workers: int
    raw: dict = field(repr=False)
    source: str = field(default="", repr=False)
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.n)

    @property
    def region(self) -> RegionMask:
        return RegionMask(self.grid, self.omega)

    @property
    def tol(self) -> float:
        return float(self.params.get("tol", 1e-3))

    def tgrid(self, T: float | None = None) -> TimeGrid:
        T = float(self.params["T"]) if T is None else T
        return TimeGrid.with_steps(max(1, int(round(T / self.dt))), self.dt)

    def time_set(self, tgrid: TimeGrid) -> TimeSet:
        E = self.params.get("E")
        return TimeSet.full(tgrid) if E is None else TimeSet(tgrid, E)

    def echo(self) -> dict:
        return self.raw


def _literal(text, line, col):
    text = text.strip()
    if text == "":
        raise ConfigSyntaxError("empty value", line, col)
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        if _BARE.match(text):
            return text
        inner = text[1:-1] if text.startswith("(") and text.endswith(")") else text
        words = [w.strip() for w in inner.split(",") if w.strip()]
        if words and all(_BARE.match(w) for w in words):
            # flat tuple of bare words, e.g. (csv, json)
            return tuple(words)
        off = getattr(exc, "offset", None)
        raise ConfigSyntaxError(f"cannot read value {text!r}: {exc.__class__.__name__}", line,
                                col + (off - 1 if off else 0)) from None


def _locate(lines):
    """Map ``(section, key) -> (line, column of value)``; 1-based."""
    where = {}
    section = None
    for i, raw in enumerate(lines, start=1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("["):
            section = s.strip("[]").strip()
            continue
        m = re.match(r"^(\s*)([^=:\s][^=:]*?)\s*[=:]\s*", raw)
        if m and section is not None:
            where[(section, m.group(2).strip())] = (i, m.end() + 1)
    return where


def parse_text(text: str) -> dict:
    """Syntax layer: sections of literal values, with positions in errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigSyntaxError("content before the first [section] header", exc.lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigSyntaxError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigSyntaxError(f"duplicate section [{exc.section}]", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        try:
            line = ast.literal_eval(line)  # some versions store repr(line)
        except (ValueError, SyntaxError):
            pass
        raise ConfigSyntaxError(f"expected 'key = value', got {line.strip()!r}", lineno, 1) from None
    where = _locate(text.splitlines())
    out = {}
    for sec in cp.sections():
        out[sec] = {}
        for key, val in cp.items(sec):
            line, col = where.get((sec, key), (None, None))
            out[sec][key] = _literal(val, line, col)
    return out


def _intervals(value):
    """Accept ``(a, b)`` or a sequence of pairs."""
    if isinstance(value, (tuple, list)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return ((float(value[0]), float(value[1])),)
    return tuple((float(a), float(b)) for a, b in value)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate(raw: dict, source: str = "", base_dir: Path = Path(".")) -> ExperimentConfig:
    bad = []
    for sec, keys in raw.items():
        if sec not in SECTIONS:
            bad.append(f"unknown section [{sec}]")
            continue
        for k in keys:
            if k not in SECTIONS[sec]:
                bad.append(f"unknown key {k!r} in [{sec}]")
    prob, task = raw.get("problem", {}), raw.get("task", {})
    out, run = raw.get("output", {}), raw.get("run", {})
    if "problem" not in raw:
        bad.append("missing [problem] section")
    if "task" not in raw:
        bad.append("missing [task] section")

    n = prob.get("n")
    if not (isinstance(n, int) and not isinstance(n, bool) and n >= 1):
        bad.append(f"problem.n must be a positive integer, got {n!r}")
        n = None

    kind = task.get("kind")
    if kind not in TASKS:
        bad.append(f"task.kind must be one of {TASKS}, got {kind!r}")
    T = task.get("T")
    if T is not None and not (_is_num(T) and T > 0):
        bad.append(f"task.T must be positive, got {T!r}")
        T = None
    if kind in ("simulate", "null-control", "observability", "scaling-study") and T is None:
        bad.append(f"task.T is required for kind {kind!r}")

    dt = prob.get("dt")
    n_steps = prob.get("n_steps")
    if dt is not None and n_steps is not None:
        bad.append("give either problem.dt or problem.n_steps, not both")
    elif dt is not None:
        if not (_is_num(dt) and dt > 0):
            bad.append(f"problem.dt must be positive, got {dt!r}")
    elif n_steps is not None:
        if not (isinstance(n_steps, int) and n_steps >= 1):
            bad.append(f"problem.n_steps must be a positive integer, got {n_steps!r}")
        elif T is None:
            bad.append("problem.n_steps needs task.T to fix the step size")
        else:
            dt = T / n_steps
    else:
        bad.append("problem.dt or problem.n_steps is required")

    f = None
    fname = prob.get("nonlinearity", "zero")
    fparams = {k: prob[k] for k in ("power", "table_x", "table_y") if k in prob}
    if fname not in KINDS and str(fname).replace("-", "_") not in KINDS:
        bad.append(f"problem.nonlinearity must be one of {KINDS}, got {fname!r}")
    else:
        from .nonlinearity import from_spec

        try:
            f = from_spec(str(fname), **fparams)
        except SignConditionError as exc:
            bad.append(f"problem.nonlinearity: {exc}")
        except (ValueError, KeyError, TypeError) as exc:
            bad.append(f"problem.nonlinearity: {exc}")

    q = prob.get("q", 2)
    if not _is_num(q) or q < 2:
        bad.append(f"problem.q = {q!r} is outside [2, inf), the admissible exponent range for d = 1")
    M = prob.get("M")
    if M is not None and not (_is_num(M) and M > 0):
        bad.append(f"problem.M must be positive, got {M!r}")
        M = None
    if kind in ("time-optimal", "improve") and M is None:
        bad.append(f"problem.M is required for kind {kind!r}")

    omega = None
    try:
        omega = _intervals(prob.get("omega", (0.0, 1.0)))
        if n is not None:
            RegionMask(Grid1D(n), omega)
    except (TypeError, ValueError) as exc:
        bad.append(f"problem.omega: {exc}")
        omega = None

    y0 = None
    modes, nodes = prob.get("y0_modes"), prob.get("y0_nodes")
    if modes is not None and nodes is not None:
        bad.append("give either problem.y0_modes or problem.y0_nodes, not both")
    elif n is not None:
        x = Grid1D(n).node_coords
        if nodes is not None:
            arr = np.asarray(nodes, dtype=float) if isinstance(nodes, (tuple, list)) else None
            if arr is None or arr.shape != (n,) or not np.all(np.isfinite(arr)):
                bad.append(f"problem.y0_nodes must list {n} finite values")
            else:
                y0 = arr
        else:
            modes = (1.0,) if modes is None else modes
            if isinstance(modes, (int, float)):
                modes = (modes,)
            if not all(_is_num(a) for a in modes):
                bad.append(f"problem.y0_modes must be numbers, got {modes!r}")
            else:
                y0 = sum(float(a) * np.sin((k + 1) * np.pi * x) for k, a in enumerate(modes))
                y0 = np.asarray(y0, dtype=float) * np.ones(n)

    params = {k: v for k, v in task.items() if k != "kind"}
    for key in ("tol", "tol_T", "source_bound_fraction", "t_hi", "dt_obs"):
        if key in params and not (_is_num(params[key]) and params[key] > 0):
            bad.append(f"task.{key} must be positive, got {params[key]!r}")
    if "source_bound_fraction" in params and _is_num(params["source_bound_fraction"]) \
            and params["source_bound_fraction"] >= 1:
        bad.append("task.source_bound_fraction must lie in (0, 1)")
    if "E" in params:
        try:
            params["E"] = _intervals(params["E"])
            if T is not None:
                E = TimeSet(TimeGrid(T, 1000), params["E"])
                if E.is_empty:
                    bad.append("task.E has no positive-measure part inside (0, T)")
        except (TypeError, ValueError) as exc:
            bad.append(f"task.E: {exc}")
    if "method" in params and params["method"] not in ("newton", "nesterov"):
        bad.append(f"task.method must be 'newton' or 'nesterov', got {params['method']!r}")
    for key in ("n_modes", "n_restarts"):
        if key in params and not (isinstance(params[key], int) and params[key] >= (1 if key == "n_modes" else 0)):
            bad.append(f"task.{key} must be a nonnegative integer, got {params[key]!r}")
    if "n_modes" in params and n is not None and isinstance(params["n_modes"], int) and params["n_modes"] > n:
        bad.append(f"task.n_modes = {params['n_modes']} exceeds problem.n = {n}")
    if kind == "scaling-study":
        mags = params.get("magnitudes")
        if not (isinstance(mags, (tuple, list)) and mags and all(_is_num(s) and s >= 0 for s in mags)
                and list(mags) == sorted(mags)):
            bad.append("task.magnitudes must be a sorted tuple of nonnegative numbers")
    if "E_family" in params:
        fam = params["E_family"]
        if not (isinstance(fam, (tuple, list)) and fam and all(_is_num(b) and b > 0 for b in fam)):
            bad.append("task.E_family must be a tuple of positive right ends of prefix sets (0, b)")
    if kind == "improve" and "control_file" not in params and "source_bound_fraction" not in params:
        bad.append("kind 'improve' needs task.control_file or task.source_bound_fraction")
    if "potential" in params and not _is_num(params["potential"]):
        bad.append(f"task.potential must be a number, got {params['potential']!r}")

    formats = out.get("formats", FORMATS)
    if isinstance(formats, str):
        formats = (formats,)
    if not all(fm in FORMATS for fm in formats):
        bad.append(f"output.formats must be drawn from {FORMATS}, got {formats!r}")
    directory = out.get("directory", "out")
    seed = run.get("seed", 0)
    if not (isinstance(seed, int) and seed >= 0):
        bad.append(f"run.seed must be a nonnegative integer, got {seed!r}")
    workers = run.get("workers", 1)
    if not (isinstance(workers, int) and workers >= 1):
        bad.append(f"run.workers must be a positive integer, got {workers!r}")

    if bad:
        raise ConfigError(bad)
    return ExperimentConfig(
        n=n, dt=float(dt), nonlinearity=f, y0=y0, omega=omega, q=float(q),
        M=None if M is None else float(M), task=kind, params=params,
        output_dir=(base_dir / str(directory)), formats=tuple(formats), seed=seed,
        workers=workers, raw=raw, source=source, base_dir=base_dir,
    )


def parse_config(text: str, base_dir=".", overrides=None) -> ExperimentConfig:
    """Parse and validate; ``overrides`` maps ``"section.key"`` to literal text."""
    raw = parse_text(text)
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if not key:
            raise ConfigSyntaxError(f"override {dotted!r} must look like section.key")
        raw.setdefault(sec, {})[key] = _literal(value, None, None) if isinstance(value, str) else value
    return validate(raw, text, Path(base_dir))


def load_config(path, overrides=None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent, overrides)
