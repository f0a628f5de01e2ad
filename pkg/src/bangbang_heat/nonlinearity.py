"""Semilinear terms ``f`` with f(0) = 0, locally Lipschitz, usually f(y) y >= 0."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

KINDS = ("zero", "cubic", "odd_power", "saturating", "custom")
_KIND_CODES = {
    "zero": K.KIND_ZERO,
    "cubic": K.KIND_CUBIC,
    "odd_power": K.KIND_ODD_POWER,
    "saturating": K.KIND_SATURATING,
    "custom": K.KIND_TABLE,
}
# multiplicative margin on sampled Lipschitz constants of tabulated f
TABLE_LIPSCHITZ_SAFETY = 1.1


class SignConditionError(ValueError):
    """Raised when a tabulated nonlinearity violates f(y) y >= 0 on its samples."""


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """A semilinear term selected by ``kind``.

    ``odd_power`` uses ``power`` (an odd integer >= 1); ``custom`` is a
    piecewise linear interpolant of ``(table_x, table_y)``, held constant
    beyond the table ends.
    """

    kind: str = "zero"
    power: float = 3.0
    table_x: np.ndarray = field(default_factory=lambda: np.zeros(2), repr=False)
    table_y: np.ndarray = field(default_factory=lambda: np.zeros(2), repr=False)
    sign_condition: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "odd_power":
            p = float(self.power)
            if p < 1 or p != int(p) or int(p) % 2 == 0:
                raise ValueError(f"odd_power needs an odd integer power >= 1, got {self.power}")
        if self.kind == "cubic":
            object.__setattr__(self, "power", 3.0)
        xs = np.asarray(self.table_x, dtype=float)
        ys = np.asarray(self.table_y, dtype=float)
        if self.kind == "custom":
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("custom table needs matching 1D x and y arrays with >= 2 samples")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("custom table x values must be strictly increasing")
            if not (xs[0] <= 0.0 <= xs[-1]):
                raise ValueError("custom table must bracket y = 0")
            if self.sign_condition:
                probe = np.concatenate([xs, np.linspace(xs[0], xs[-1], 4001)])
                if np.any(np.interp(probe, xs, ys) * probe < 0):
                    raise SignConditionError("tabulated nonlinearity violates f(y) y >= 0 on its samples")
        object.__setattr__(self, "table_x", xs)
        object.__setattr__(self, "table_y", ys)

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls("zero")

    @classmethod
    def cubic(cls) -> "Nonlinearity":
        return cls("cubic")

    @classmethod
    def odd_power(cls, p: int) -> "Nonlinearity":
        return cls("odd_power", power=float(p))

    @classmethod
    def saturating(cls) -> "Nonlinearity":
        return cls("saturating")

    @classmethod
    def custom(cls, xs, ys, sign_condition: bool = True) -> "Nonlinearity":
        return cls("custom", table_x=xs, table_y=ys, sign_condition=sign_condition)

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def lipschitz_is_estimate(self) -> bool:
        return self.kind == "custom"

    def kernel_args(self):
        """Positional arguments describing ``f`` to the marching kernels."""
        return self.code, float(self.power), self.table_x, self.table_y

    def evaluate(self, y):
        arr = np.asarray(y, dtype=float)
        out = K._f_values(self.code, float(self.power), self.table_x, self.table_y, np.atleast_1d(arr))
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    __call__ = evaluate

    def derivative(self, y):
        arr = np.asarray(y, dtype=float)
        flat = np.atleast_1d(arr).ravel()
        out = K._f_slopes(self.code, float(self.power), self.table_x, self.table_y, flat)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def lipschitz_on(self, K_: float) -> float:
        """Upper bound on the Lipschitz constant of f over [-K_, K_]."""
        if K_ < 0:
            raise ValueError(f"interval half-width must be >= 0, got {K_}")
        if self.kind == "zero" or K_ == 0:
            return 0.0
        if self.kind in ("cubic", "odd_power"):
            return float(self.power * K_ ** (self.power - 1.0))
        if self.kind == "saturating":
            return float(1.0 - 1.0 / (1.0 + K_) ** 2)
        xs, ys = self.table_x, self.table_y
        slopes = np.abs(np.diff(ys) / np.diff(xs))
        # segments touching [-K_, K_]
        touch = (xs[1:] >= -K_) & (xs[:-1] <= K_)
        if not touch.any():
            return 0.0
        return float(TABLE_LIPSCHITZ_SAFETY * slopes[touch].max())

    def linearized_potential(self, phi, r):
        """Difference quotient ``(f(phi + r) - f(phi)) / r``, ``f'(phi)`` at ``r = 0``."""
        phi = np.asarray(phi, dtype=float)
        r = np.asarray(r, dtype=float)
        scalar = phi.ndim == 0 and r.ndim == 0
        phi, r = np.broadcast_arrays(np.atleast_1d(phi), np.atleast_1d(r))
        if self.kind == "zero":
            out = np.zeros(phi.shape)
        elif self.kind in ("cubic", "odd_power"):
            # sum_{j<p} (phi + r)^j phi^(p-1-j): exact, continuous in r
            p = int(self.power)
            s = phi + r
            out = np.zeros(phi.shape)
            for j in range(p):
                out += s**j * phi ** (p - 1 - j)
        else:
            small = np.abs(r) <= 1e-7 * (1.0 + np.abs(phi))
            safe_r = np.where(small, 1.0, r)
            quotient = (self.evaluate(phi + safe_r) - self.evaluate(phi)) / safe_r
            out = np.where(small, self.derivative(phi + 0.5 * r), quotient)
        return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class TruncatedNonlinearity:
    """``f`` frozen to ``f(cap)`` above ``cap`` and ``f(-cap)`` below ``-cap``."""

    base: Nonlinearity
    cap: float

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError(f"cap must be positive, got {self.cap}")

    def evaluate(self, y):
        return self.base.evaluate(np.clip(y, -self.cap, self.cap))

    __call__ = evaluate

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        d = self.base.derivative(np.clip(y, -self.cap, self.cap))
        return np.where(np.abs(y) > self.cap, 0.0, d) if np.ndim(d) else (0.0 if abs(y) > self.cap else d)

    @property
    def lipschitz(self) -> float:
        return self.base.lipschitz_on(self.cap)

    def lipschitz_on(self, K_: float) -> float:
        return self.base.lipschitz_on(min(K_, self.cap))


def from_spec(name: str, **params) -> Nonlinearity:
    """Build a nonlinearity from a config name and parameters."""
    name = name.replace("-", "_")
    if name == "zero":
        return Nonlinearity.zero()
    if name == "cubic":
        return Nonlinearity.cubic()
    if name == "odd_power":
        return Nonlinearity.odd_power(int(params.get("power", params.get("p", 3))))
    if name == "saturating":
        return Nonlinearity.saturating()
    if name == "custom":
        return Nonlinearity.custom(params["table_x"], params["table_y"])
    raise ValueError(f"unknown nonlinearity {name!r}; expected one of {KINDS}")
