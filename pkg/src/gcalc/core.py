"""Shared domain types: volatility intervals, time grids, payoffs, paths, estimates."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "NumericError",
    "UnsupportedPayoffError",
    "VolatilityInterval",
    "TimeGrid",
    "PayoffSpec",
    "parse_payoff",
    "eval_payoff",
    "payoff_derivatives",
    "SamplePath",
    "RoughLift",
    "Estimate",
]

MAX_POLY_DEGREE = 8
MAX_EXP_RATE = 2.0


class ValidationError(ValueError):
    """Malformed input: bad parameters, off-grid times, CFL violations."""


class UnsupportedPayoffError(ValidationError):
    """The operation needs a twice-differentiable payoff and got a kinked one."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


@dataclass(frozen=True)
class VolatilityInterval:
    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        lo, hi = float(self.sigma_low), float(self.sigma_high)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValidationError("volatility bounds must be finite")
        if not 0.0 < lo <= hi:
            raise ValidationError(f"need 0 < sigma_low <= sigma_high, got [{lo}, {hi}]")
        object.__setattr__(self, "sigma_low", lo)
        object.__setattr__(self, "sigma_high", hi)

    @property
    def is_degenerate(self) -> bool:
        return self.sigma_low == self.sigma_high

    def clamp(self, x):
        return np.clip(x, self.sigma_low, self.sigma_high)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        T = float(self.horizon)
        if not (math.isfinite(T) and T > 0):
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def node_index(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is off-grid."""
        k = round(t / self.dt)
        if not 0 <= k <= self.n_steps or abs(k * self.dt - t) > tol * max(1.0, self.horizon):
            raise ValidationError(f"time {t} is not a node of {self}")
        return int(k)


# -- payoffs -----------------------------------------------------------------

_KINDS = {
    "quadratic": (),
    "neg_quadratic": (),
    "identity": (),
    "constant": ("c",),
    "call": ("K",),
    "put": ("K",),
    "butterfly": ("K", "w"),
    "exponential": ("a",),
    "polynomial": None,  # variable-length coefficients
}
_SMOOTH = {"quadratic", "neg_quadratic", "identity", "constant", "exponential", "polynomial"}
_ALIASES = {"poly": "polynomial", "exp": "exponential", "const": "constant", "neg-quadratic": "neg_quadratic"}


@dataclass(frozen=True)
class PayoffSpec:
    """A named terminal payoff from a closed set.

    ``params`` holds the kind's parameters in order (``K, w`` for butterfly,
    ascending coefficients for polynomial).
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in _KINDS:
            raise ValidationError(f"unknown payoff kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if not all(math.isfinite(p) for p in params):
            raise ValidationError(f"payoff parameters must be finite: {params}")
        names = _KINDS[kind]
        if names is not None and len(params) != len(names):
            raise ValidationError(f"{kind} takes parameters {names}, got {params}")
        if kind == "polynomial":
            if not 1 <= len(params) <= MAX_POLY_DEGREE + 1:
                raise ValidationError(f"polynomial needs 1..{MAX_POLY_DEGREE + 1} coefficients")
        if kind == "butterfly" and params[1] <= 0:
            raise ValidationError(f"butterfly width must be positive, got {params[1]}")
        if kind == "exponential" and abs(params[0]) > MAX_EXP_RATE:
            raise ValidationError(f"exponential rate |a| must be <= {MAX_EXP_RATE}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)

    # convenience constructors
    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def neg_quadratic(cls):
        return cls("neg_quadratic")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def call(cls, K):
        return cls("call", (K,))

    @classmethod
    def put(cls, K):
        return cls("put", (K,))

    @classmethod
    def butterfly(cls, K, w):
        return cls("butterfly", (K, w))

    @classmethod
    def exponential(cls, a):
        return cls("exponential", (a,))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]):
        return cls("polynomial", tuple(coeffs))

    @property
    def is_smooth(self) -> bool:
        return self.kind in _SMOOTH

    def __call__(self, x):
        return eval_payoff(self, x)

    def scaled(self, lam: float) -> "PayoffSpec":
        """``lam * phi`` when that stays inside the closed set; used by homogeneity tests."""
        if self.kind == "constant":
            return PayoffSpec.constant(lam * self.params[0])
        if self.kind == "polynomial":
            return PayoffSpec.polynomial([lam * c for c in self.params])
        if self.kind == "quadratic":
            return PayoffSpec.polynomial([0, 0, lam])
        if self.kind == "neg_quadratic":
            return PayoffSpec.polynomial([0, 0, -lam])
        if self.kind == "identity":
            return PayoffSpec.polynomial([0, lam])
        raise ValidationError(f"{self.kind} is not closed under scaling")

    def to_text(self) -> str:
        k, p = self.kind, self.params
        if k in ("quadratic", "neg_quadratic", "identity"):
            return k
        if k == "polynomial":
            return "poly:" + ",".join(repr(c) for c in p)
        names = _KINDS[k]
        return k + ":" + ",".join(f"{n}={v!r}" for n, v in zip(names, p))


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_payoff(text: str) -> PayoffSpec:
    """Parse the textual payoff form.

    Grammar::

        quadratic | neg_quadratic | identity
        constant:c=<x> | constant:<x>
        call:K=<x> | put:K=<x> | butterfly:K=<x>,w=<x> | exp:a=<x>
        poly:<c0>,<c1>,...          (ascending coefficients)

    Named parameters may also be given positionally (``butterfly:0,1``).
    """
    text = text.strip()
    name, _, rest = text.partition(":")
    kind = _ALIASES.get(name.strip(), name.strip())
    if kind not in _KINDS:
        raise ValidationError(f"unknown payoff kind {name!r} in {text!r}")
    tokens = [t.strip() for t in rest.split(",")] if rest.strip() else []
    if kind == "polynomial":
        try:
            return PayoffSpec(kind, tuple(float(t) for t in tokens))
        except ValueError as exc:
            raise ValidationError(f"bad polynomial coefficients in {text!r}") from exc
    names = _KINDS[kind]
    if len(tokens) != len(names):
        raise ValidationError(f"{kind} expects parameters {names}, got {text!r}")
    values = []
    for nm, tok in zip(names, tokens):
        key, eq, val = tok.partition("=")
        if not eq:
            key, val = nm, tok
        if key.strip() != nm or not re.fullmatch(_NUM, val.strip()):
            raise ValidationError(f"bad parameter {tok!r} for {kind} (expected {nm}=<number>)")
        values.append(float(val))
    return PayoffSpec(kind, tuple(values))


def eval_payoff(p: PayoffSpec, x):
    """Evaluate ``p`` at ``x`` (scalar or array). Scalars in, float out."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=np.float64)
    k, prm = p.kind, p.params
    if k == "quadratic":
        y = x * x
    elif k == "neg_quadratic":
        y = -(x * x)
    elif k == "identity":
        y = x + 0.0
    elif k == "constant":
        y = np.full_like(x, prm[0])
    elif k == "call":
        y = np.maximum(x - prm[0], 0.0)
    elif k == "put":
        y = np.maximum(prm[0] - x, 0.0)
    elif k == "butterfly":
        y = np.maximum(1.0 - np.abs(x - prm[0]) / prm[1], 0.0)
    elif k == "exponential":
        with np.errstate(over="ignore"):
            y = np.exp(prm[0] * x)
    else:
        # overflow surfaces as inf and is reported by the caller's finiteness check
        y = np.zeros_like(x)
        with np.errstate(over="ignore", invalid="ignore"):
            for c in reversed(prm):
                y = y * x + c
    return float(y) if scalar else y


def payoff_derivatives(p: PayoffSpec, x):
    """First and second derivatives of a smooth payoff at ``x``."""
    if not p.is_smooth:
        raise UnsupportedPayoffError(f"{p.kind} payoff is not twice differentiable")
    x = np.asarray(x, dtype=np.float64)
    k, prm = p.kind, p.params
    if k == "quadratic":
        return 2.0 * x, np.full_like(x, 2.0)
    if k == "neg_quadratic":
        return -2.0 * x, np.full_like(x, -2.0)
    if k == "identity":
        return np.ones_like(x), np.zeros_like(x)
    if k == "constant":
        return np.zeros_like(x), np.zeros_like(x)
    if k == "exponential":
        e = np.exp(prm[0] * x)
        return prm[0] * e, prm[0] ** 2 * e
    d1 = np.polynomial.polynomial.polyder(prm, 1) if len(prm) > 1 else [0.0]
    d2 = np.polynomial.polynomial.polyder(prm, 2) if len(prm) > 2 else [0.0]
    return np.polynomial.polynomial.polyval(x, d1), np.polynomial.polynomial.polyval(x, d2)


# -- paths and estimates -----------------------------------------------------


@dataclass(frozen=True)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValidationError(f"path needs {self.grid.n_steps + 1} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class RoughLift:
    """A discrete path ``b`` paired with its quadratic variation ``qv``."""

    grid: TimeGrid
    b: np.ndarray
    qv: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        qv = np.asarray(self.qv, dtype=np.float64)
        n = self.grid.n_steps + 1
        if b.shape != (n,) or qv.shape != (n,):
            raise ValidationError(f"lift arrays must have length {n}")
        if b[0] != 0.0 or qv[0] != 0.0:
            raise ValidationError("lift must start at b[0] = qv[0] = 0")
        if np.any(np.diff(qv) < 0):
            raise ValidationError("quadratic variation must be nondecreasing")
        b.setflags(write=False)
        qv.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "qv", qv)

    @property
    def path(self) -> SamplePath:
        return SamplePath(self.grid, self.b)

    def key(self) -> bytes:
        """Exact identity of the lift, for grouping equal lifts."""
        return self.b.tobytes() + self.qv.tobytes() + repr(self.grid).encode()

    def to_csv(self, path) -> None:
        data = np.column_stack([self.grid.times, self.b, self.qv])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t,b,qv", comments="")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std_error)) or self.std_error < 0:
            raise NumericError(f"invalid estimate mean={self.mean} se={self.std_error}")

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths, "seed": self.seed}
