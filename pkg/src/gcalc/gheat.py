"""Explicit monotone finite differences for the G-heat equation.

The value function v(t, x) = sup_theta E[phi(x + int_t^T theta dW)] solves

    v_t + G(v_xx) = 0,   v(T, .) = phi,   G(a) = (sigma_high^2 a^+ - sigma_low^2 a^-) / 2.

We march backward from the terminal row with a central second difference.
Under ``dt * sigma_high^2 <= dx^2`` every update is a convex combination of
neighbouring values, so the scheme is monotone and converges to the viscosity
solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    NumericError,
    PayoffSpec,
    TimeGrid,
    UnsupportedPayoffError,
    ValidationError,
    VolatilityInterval,
    eval_payoff,
    payoff_derivatives,
)

__all__ = [
    "CFLError",
    "SpaceGrid",
    "ValueGrid",
    "FeedbackPolicy",
    "g_operator",
    "default_space_grid",
    "min_cfl_steps",
    "default_time_grid",
    "solve_g_heat",
    "g_expectation_pde",
    "extract_policy",
    "semigroup_compose",
    "generator_limit_check",
]

DEFAULT_N_POINTS = 801
TAIL_WIDTH = 6.0
_CFL_SLACK = 1e-12


class CFLError(ValidationError):
    def __init__(self, message: str, min_steps: int):
        super().__init__(message)
        self.min_steps = min_steps


@dataclass(frozen=True)
class SpaceGrid:
    half_width: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ValidationError(f"half_width must be positive, got {self.half_width}")
        if int(self.n_points) != self.n_points or self.n_points < 3 or self.n_points % 2 == 0:
            raise ValidationError(f"n_points must be an odd integer >= 3, got {self.n_points}")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def center(self) -> int:
        return (self.n_points - 1) // 2

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(self.n_points) - self.center
        x = i * self.dx
        x[self.center] = 0.0
        return x

    def nearest(self, x):
        """Index of the nearest node, clamped to the grid."""
        i = np.rint(np.asarray(x) / self.dx) + self.center
        return np.clip(i, 0, self.n_points - 1).astype(np.intp)

    def refined(self) -> "SpaceGrid":
        return SpaceGrid(self.half_width, 2 * self.n_points - 1)


@dataclass(frozen=True, eq=False)
class ValueGrid:
    space: SpaceGrid
    time: TimeGrid
    u: np.ndarray  # (n_steps + 1, n_points)

    def value_at_origin(self) -> float:
        return float(self.u[0, self.space.center])

    def to_csv(self, path, time_stride: int = 1) -> None:
        rows = np.arange(0, self.time.n_steps + 1, time_stride)
        if rows[-1] != self.time.n_steps:
            rows = np.append(rows, self.time.n_steps)
        t = np.repeat(self.time.times[rows], self.space.n_points)
        x = np.tile(self.space.nodes, len(rows))
        data = np.column_stack([t, x, self.u[rows].ravel()])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header="t,x,u", comments="")


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    space: SpaceGrid
    time: TimeGrid
    theta_star: np.ndarray  # (n_steps + 1, n_points), entries sigma_low or sigma_high

    def row_for_time(self, t) -> np.ndarray:
        k = np.rint(np.asarray(t) / self.time.dt)
        return np.clip(k, 0, self.time.n_steps).astype(np.intp)

    def lookup(self, t, x):
        return self.theta_star[self.row_for_time(t), self.space.nearest(x)]


def g_operator(alpha, theta: VolatilityInterval):
    """G(a) = (sigma_high^2 a^+ - sigma_low^2 a^-) / 2."""
    a = np.asarray(alpha, dtype=np.float64)
    out = 0.5 * (theta.sigma_high**2 * np.maximum(a, 0.0) - theta.sigma_low**2 * np.maximum(-a, 0.0))
    return float(out) if np.ndim(alpha) == 0 else out


def default_space_grid(theta: VolatilityInterval, horizon: float, n_points: int = DEFAULT_N_POINTS,
                       x0: float = 0.0) -> SpaceGrid:
    """Six standard deviations of the widest scenario, shifted out by ``|x0|``."""
    return SpaceGrid(TAIL_WIDTH * theta.sigma_high * math.sqrt(horizon) + abs(x0), n_points)


def min_cfl_steps(horizon: float, space: SpaceGrid, theta: VolatilityInterval) -> int:
    n = max(1, math.ceil(horizon * theta.sigma_high**2 / space.dx**2 * (1 - _CFL_SLACK)))
    return n


def default_time_grid(horizon: float, space: SpaceGrid, theta: VolatilityInterval) -> TimeGrid:
    return TimeGrid(horizon, min_cfl_steps(horizon, space, theta))


def _check_cfl(time: TimeGrid, space: SpaceGrid, theta: VolatilityInterval) -> float:
    ratio = time.dt * theta.sigma_high**2 / space.dx**2
    if ratio > 1.0 + _CFL_SLACK:
        n_min = min_cfl_steps(time.horizon, space, theta)
        raise CFLError(
            f"CFL violated: dt*sigma_high^2/dx^2 = {ratio:.6g} > 1; "
            f"need at least {n_min} time steps for horizon {time.horizon}", n_min)
    return ratio


def _second_difference(u: np.ndarray, dx2: float) -> np.ndarray:
    # zero at the two boundary nodes along the last axis
    d2 = np.zeros_like(u)
    d2[..., 1:-1] = (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]) / dx2
    return d2


def _sweep(terminal: np.ndarray, theta: VolatilityInterval, dt: float, dx: float, n_steps: int,
           keep_rows: bool = False):
    """March ``n_steps`` backward from ``terminal`` along its last axis.

    Returns the t=0 row, or every row (time-major) when ``keep_rows``.
    """
    hi2, lo2 = theta.sigma_high**2, theta.sigma_low**2
    dx2 = dx * dx
    u = np.array(terminal, dtype=np.float64)
    rows = np.empty((n_steps + 1,) + u.shape) if keep_rows else None
    if keep_rows:
        rows[n_steps] = u
    for k in range(n_steps - 1, -1, -1):
        d2 = _second_difference(u, dx2)
        u = u + dt * (0.5 * (hi2 * np.maximum(d2, 0.0) - lo2 * np.maximum(-d2, 0.0)))
        if not np.isfinite(u).all():
            bad = np.argwhere(~np.isfinite(u))[0]
            raise NumericError(f"non-finite value at time step {k}, cell {tuple(int(i) for i in bad)}")
        if keep_rows:
            rows[k] = u
    return rows if keep_rows else u


def _resolve_grids(theta, horizon, time, space):
    if space is None:
        space = default_space_grid(theta, horizon)
    if time is None:
        time = default_time_grid(horizon, space, theta)
    return time, space


def solve_g_heat(p: PayoffSpec, theta: VolatilityInterval, time: TimeGrid, space: SpaceGrid) -> ValueGrid:
    """Full value grid ``u[k, i] ~ v(t_k, x_i)`` for terminal payoff ``p``."""
    _check_cfl(time, space, theta)
    terminal = eval_payoff(p, space.nodes)
    if not np.isfinite(terminal).all():
        i = int(np.argwhere(~np.isfinite(terminal))[0][0])
        raise NumericError(f"non-finite payoff at time step {time.n_steps}, cell {i}")
    u = _sweep(terminal, theta, time.dt, space.dx, time.n_steps, keep_rows=True)
    return ValueGrid(space, time, u)


def g_expectation_pde(p: PayoffSpec, theta: VolatilityInterval, time: TimeGrid | None = None,
                      space: SpaceGrid | None = None, horizon: float = 1.0) -> float:
    """G-expectation of ``p(B_T)`` read off at (t=0, x=0).

    ``horizon`` only matters when ``time`` is omitted and default grids are built.
    """
    if time is not None:
        horizon = time.horizon
    time, space = _resolve_grids(theta, horizon, time, space)
    _check_cfl(time, space, theta)
    u0 = _sweep(eval_payoff(p, space.nodes), theta, time.dt, space.dx, time.n_steps)
    return float(u0[space.center])


def extract_policy(v: ValueGrid, theta: VolatilityInterval) -> FeedbackPolicy:
    """Bang-bang maximiser of G at every cell; ties go to sigma_high."""
    d2 = _second_difference(v.u, v.space.dx**2)
    star = np.where(d2 >= 0.0, theta.sigma_high, theta.sigma_low)
    return FeedbackPolicy(v.space, v.time, star)


def _interp_onto(values: np.ndarray, src: SpaceGrid, dst: SpaceGrid) -> np.ndarray:
    if src == dst:
        return values.copy()
    return np.interp(dst.nodes, src.nodes, values)


def semigroup_compose(p: PayoffSpec, theta: VolatilityInterval, t_split: float, time: TimeGrid,
                      space: SpaceGrid, lower_space: SpaceGrid | None = None) -> float:
    """Solve on [t_split, T], restart from that slice, solve on [0, t_split].

    The restart slice is linearly interpolated onto ``lower_space`` (the same
    grid by default); the lower segment uses the minimal CFL step count for it.
    """
    if not 0.0 < t_split < time.horizon:
        raise ValidationError(f"t_split must lie strictly inside (0, {time.horizon})")
    k = time.node_index(t_split)
    _check_cfl(time, space, theta)
    upper = _sweep(eval_payoff(p, space.nodes), theta, time.dt, space.dx, time.n_steps - k)
    lower_space = lower_space or space
    restart = _interp_onto(upper, space, lower_space)
    n_lower = max(k, min_cfl_steps(t_split, lower_space, theta)) if lower_space != space else k
    lower_time = TimeGrid(t_split, n_lower)
    _check_cfl(lower_time, lower_space, theta)
    u0 = _sweep(restart, theta, lower_time.dt, lower_space.dx, n_lower)
    return float(u0[lower_space.center])


def generator_limit_check(p: PayoffSpec, x: float, theta: VolatilityInterval, t_small: float,
                          n_points: int = DEFAULT_N_POINTS) -> tuple[float, float]:
    """(difference quotient (E[phi(x + B_t)] - phi(x)) / t, analytic G(phi''(x)))."""
    if not p.is_smooth:
        raise UnsupportedPayoffError(f"{p.kind} payoff has no second derivative")
    if not t_small > 0:
        raise ValidationError("t_small must be positive")
    space = default_space_grid(theta, t_small, n_points)
    time = default_time_grid(t_small, space, theta)
    terminal = eval_payoff(p, x + space.nodes)
    u0 = _sweep(terminal, theta, time.dt, space.dx, time.n_steps)
    quotient = (float(u0[space.center]) - eval_payoff(p, x)) / t_small
    _, d2 = payoff_derivatives(p, x)
    return quotient, g_operator(float(d2), theta)
