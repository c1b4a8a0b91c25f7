"""Admissible volatility controls: fixed paths, constant grids, bang-bang feedback."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import PayoffSpec, TimeGrid, ValidationError, VolatilityInterval, eval_payoff
from .gheat import FeedbackPolicy

__all__ = [
    "ControlPath",
    "ControlFamily",
    "control_at",
    "controls_at",
    "max_distribution_expectation",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ControlPath:
    """Piecewise-constant control; ``values[k]`` is held on [t_k, t_{k+1})."""

    grid: TimeGrid
    values: np.ndarray
    theta: VolatilityInterval

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_steps,):
            raise ValidationError(f"control path needs {self.grid.n_steps} values, got {v.shape}")
        if np.any(v < self.theta.sigma_low) or np.any(v > self.theta.sigma_high):
            raise ValidationError(f"control values must lie in [{self.theta.sigma_low}, {self.theta.sigma_high}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_csv(cls, path, grid: TimeGrid, theta: VolatilityInterval) -> "ControlPath":
        return cls(grid, np.loadtxt(path, dtype=np.float64, ndmin=1), theta)


@dataclass(frozen=True, eq=False)
class ControlFamily:
    kind: str  # "constant_grid" | "feedback" | "fixed"
    theta: VolatilityInterval
    n_levels: int = 0
    policy: FeedbackPolicy | None = None
    path: ControlPath | None = None

    def __post_init__(self):
        if self.kind == "constant_grid":
            if int(self.n_levels) != self.n_levels or self.n_levels < 2:
                raise ValidationError("constant_grid needs n_levels >= 2")
        elif self.kind == "feedback":
            if self.policy is None:
                raise ValidationError("feedback family needs a FeedbackPolicy")
        elif self.kind == "fixed":
            if self.path is None:
                raise ValidationError("fixed family needs a ControlPath")
        else:
            raise ValidationError(f"unknown control family kind {self.kind!r}")

    @classmethod
    def constant_grid(cls, theta: VolatilityInterval, n_levels: int) -> "ControlFamily":
        return cls("constant_grid", theta, n_levels=n_levels)

    @classmethod
    def feedback(cls, policy: FeedbackPolicy, theta: VolatilityInterval) -> "ControlFamily":
        return cls("feedback", theta, policy=policy)

    @classmethod
    def fixed(cls, path: ControlPath) -> "ControlFamily":
        return cls("fixed", path.theta, path=path)

    @property
    def n_members(self) -> int:
        return self.n_levels if self.kind == "constant_grid" else 1

    @cached_property
    def levels(self) -> np.ndarray:
        if self.kind != "constant_grid":
            raise ValidationError("only constant_grid families have levels")
        lo, hi = self.theta.sigma_low, self.theta.sigma_high
        j = np.arange(self.n_levels)
        lv = lo + j * (hi - lo) / (self.n_levels - 1)
        lv[-1] = hi
        lv.setflags(write=False)
        return lv

    @property
    def is_state_free(self) -> bool:
        """True when the control never looks at the state."""
        return self.kind != "feedback"

    def describe(self) -> str:
        if self.kind == "constant_grid":
            return f"constant:{self.n_levels}"
        return self.kind


def _check_member(f: ControlFamily, member: int):
    if not 0 <= member < f.n_members:
        raise ValidationError(f"member {member} out of range for {f.describe()} ({f.n_members} members)")


def controls_at(f: ControlFamily, k: int, x, member: int = 0, grid: TimeGrid | None = None) -> np.ndarray:
    """Vectorised :func:`control_at` over an array of states ``x``."""
    _check_member(f, member)
    x = np.asarray(x, dtype=np.float64)
    if f.kind == "constant_grid":
        return np.full(x.shape, f.levels[member])
    if f.kind == "fixed":
        n = f.path.grid.n_steps
        if not 0 <= k < n:
            raise ValidationError(f"step {k} outside control path of {n} steps")
        if grid is not None and grid != f.path.grid:
            raise ValidationError("fixed control path grid does not match the simulation grid")
        return f.theta.clamp(np.full(x.shape, f.path.values[k]))
    grid = grid or f.policy.time
    if not 0 <= k < grid.n_steps:
        raise ValidationError(f"step {k} outside grid of {grid.n_steps} steps")
    return f.theta.clamp(f.policy.lookup(k * grid.dt, x))


def control_at(f: ControlFamily, k: int, x: float, member: int = 0, grid: TimeGrid | None = None) -> float:
    """Control value on step ``k`` given state ``x`` at t_k.

    ``grid`` is the simulation grid that gives step ``k`` its time; feedback
    families default to the policy's own grid.
    """
    return float(controls_at(f, k, x, member, grid))


def _golden_max(fn, a: float, b: float, iters: int = 60) -> tuple[float, float]:
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def max_distribution_expectation(p: PayoffSpec, lambda_low: float, lambda_high: float, n_grid: int = 101) -> float:
    """sup of phi(mu) over mu in [lambda_low, lambda_high].

    Grid search, then one golden-section pass on the bracket around the best
    node; no concavity is assumed.
    """
    if lambda_low > lambda_high:
        raise ValidationError("need lambda_low <= lambda_high")
    if n_grid < 2:
        raise ValidationError("n_grid must be >= 2")
    mu = np.linspace(lambda_low, lambda_high, n_grid)
    vals = eval_payoff(p, mu)
    j = int(np.argmax(vals))
    best = float(vals[j])
    if lambda_low < lambda_high:
        a, b = mu[max(j - 1, 0)], mu[min(j + 1, n_grid - 1)]
        _, refined = _golden_max(lambda m: eval_payoff(p, m), float(a), float(b))
        best = max(best, refined)
    return best
