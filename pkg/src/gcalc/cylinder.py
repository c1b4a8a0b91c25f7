"""Cylinder functions of G-Brownian increments.

A cylinder function is phi(B_{t1}, B_{t2} - B_{t1}, ..., B_{tn} - B_{tn-1}).
Its G-expectation is computed backward one increment at a time: the last
argument is integrated out by a G-heat solve over its own interval, for
every node of a tensor grid over the earlier arguments, and the result
becomes the terminal data for the previous increment.

Each increment slot k has its own space grid, sized for the interval
t_k - t_{k-1}, and the same grid serves both as the PDE grid when slot k
is integrated out and as the parameter grid while later slots are solved.
"""

from __future__ import annotations

import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Estimate, PayoffSpec, TimeGrid, ValidationError, VolatilityInterval, eval_payoff, parse_payoff
from .gheat import SpaceGrid, _second_difference, _sweep, default_space_grid, min_cfl_steps
from .mc import SimConfig, monte_carlo

__all__ = [
    "MAX_INCREMENTS",
    "GridResolutionWarning",
    "UnsupportedCylinderError",
    "CylinderPayoff",
    "CylinderFunction",
    "CylinderGrids",
    "parse_cylinder_payoff",
    "g_expectation_cylinder",
    "conditional_g_expectation",
    "tower_check",
    "cylinder_mc_check",
]

MAX_INCREMENTS = 3
_TIME_TOL = 1e-12


class GridResolutionWarning(UserWarning):
    """The Richardson estimate of the grid error exceeds the tolerance."""


class UnsupportedCylinderError(ValidationError):
    pass


@dataclass(frozen=True)
class CylinderPayoff:
    """phi(x_1, ..., x_n) = sum_i p_i(x_i) or prod_i p_i(x_i)."""

    op: str  # "sum" | "product"
    parts: tuple

    def __post_init__(self):
        if self.op not in ("sum", "product"):
            raise ValidationError(f"cylinder payoff must be sum or product, got {self.op!r}")
        parts = tuple(self.parts)
        if not parts:
            raise ValidationError("cylinder payoff needs at least one part")
        if not all(isinstance(p, PayoffSpec) for p in parts):
            raise ValidationError("cylinder payoff parts must be PayoffSpec instances")
        object.__setattr__(self, "parts", parts)

    @property
    def n_args(self) -> int:
        return len(self.parts)

    def __call__(self, *args):
        """Evaluate on broadcastable arguments, one per increment."""
        if len(args) != self.n_args:
            raise ValidationError(f"expected {self.n_args} arguments, got {len(args)}")
        vals = [eval_payoff(p, a) for p, a in zip(self.parts, args)]
        out = vals[0]
        for v in vals[1:]:
            out = out + v if self.op == "sum" else out * v
        return out

    def scaled(self, lam: float) -> "CylinderPayoff":
        """``lam * phi``: scales every part of a sum, only the first part of a product."""
        if self.op == "sum":
            return CylinderPayoff("sum", tuple(p.scaled(lam) for p in self.parts))
        return CylinderPayoff("product", (self.parts[0].scaled(lam),) + self.parts[1:])

    def to_text(self) -> str:
        return self.op + ":" + ";".join(p.to_text() for p in self.parts)


def _is_param_token(tok: str) -> bool:
    if ":" in tok:
        return False
    return "=" in tok or re.fullmatch(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", tok) is not None


def parse_cylinder_payoff(text: str) -> CylinderPayoff:
    """Parse ``sum:<p1>,<p2>``, ``product:<p1>;<p2>`` or a single payoff.

    Parts are separated by ``;``, or by ``,`` when no ``;`` is present; in the
    latter case tokens that look like parameters (``K=1``, ``0.5``) stay with
    the preceding part, so ``sum:call:K=0,quadratic`` has two parts.
    """
    text = text.strip()
    head, sep, rest = text.partition(":")
    if head.strip() not in ("sum", "product"):
        return CylinderPayoff("sum", (parse_payoff(text),))
    if not rest.strip():
        raise ValidationError(f"no parts in cylinder payoff {text!r}")
    if ";" in rest:
        chunks = [c.strip() for c in rest.split(";")]
    else:
        chunks = []
        for tok in (t.strip() for t in rest.split(",")):
            if chunks and _is_param_token(tok):
                chunks[-1] += "," + tok
            else:
                chunks.append(tok)
    return CylinderPayoff(head.strip(), tuple(parse_payoff(c) for c in chunks))


@dataclass(frozen=True)
class CylinderFunction:
    times: tuple
    phi: CylinderPayoff

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValidationError("cylinder function needs at least one time")
        if len(times) > MAX_INCREMENTS:
            raise UnsupportedCylinderError(
                f"{len(times)} increments requested; at most {MAX_INCREMENTS} are supported "
                "(the tensor grid grows as n_points^(n-1))")
        if not all(math.isfinite(t) for t in times) or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(f"times must be strictly increasing and positive, got {times}")
        if self.phi.n_args != len(times):
            raise ValidationError(f"phi takes {self.phi.n_args} arguments but {len(times)} times were given")
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def intervals(self) -> tuple:
        t = (0.0,) + self.times
        return tuple(b - a for a, b in zip(t, t[1:]))


@dataclass(frozen=True)
class CylinderGrids:
    """Per-axis space resolution shared by every slot, plus the Richardson check.

    The check re-solves with ``(n_points + 1) // 2`` points and warns when
    ``|fine - coarse| / 3`` (second-order extrapolation) exceeds ``richardson_tol``.
    """

    n_points: int = 201
    richardson_tol: float = 1e-2
    threads: int = 1

    def __post_init__(self):
        SpaceGrid(1.0, self.n_points)  # validates oddness and size

    def axis(self, theta: VolatilityInterval, horizon: float) -> tuple[SpaceGrid, TimeGrid]:
        space = default_space_grid(theta, horizon, self.n_points)
        return space, TimeGrid(horizon, min_cfl_steps(horizon, space, theta))

    def coarsened(self) -> "CylinderGrids":
        n = (self.n_points + 1) // 2
        return CylinderGrids(n if n % 2 else n + 1, self.richardson_tol, self.threads)


def _parallel_sweep(u: np.ndarray, theta, time: TimeGrid, space: SpaceGrid, threads: int) -> np.ndarray:
    """Integrate out the last axis; rows are independent, so chunking is bitwise neutral."""
    lead = u.shape[:-1]
    flat = u.reshape(-1, u.shape[-1])
    threads = max(1, int(threads))
    if threads == 1 or flat.shape[0] < 2 * threads:
        out = _sweep(flat, theta, time.dt, space.dx, time.n_steps)[:, space.center]
    else:
        chunks = np.array_split(flat, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _sweep(c, theta, time.dt, space.dx, time.n_steps)[:, space.center], chunks))
        out = np.concatenate(parts)
    return out.reshape(lead)


def _recurse(phi: CylinderPayoff, pinned: Sequence, horizons: Sequence[float], offset, theta: VolatilityInterval,
             grids: CylinderGrids):
    """Backward recursion over the remaining slots.

    ``pinned`` are the already known leading increments (arrays sharing a
    batch shape, or scalars); ``offset`` is added to the first remaining
    increment. Returns the value with the batch shape.
    """
    batch = np.broadcast_shapes(*(np.shape(p) for p in pinned), np.shape(offset))
    axes = [grids.axis(theta, h) for h in horizons]
    r = len(axes)
    args = []
    for p in pinned:
        args.append(np.reshape(p, np.shape(p) + (1,) * r))
    for j, (space, _) in enumerate(axes):
        shape = [1] * r
        shape[j] = space.n_points
        x = space.nodes.reshape((1,) * len(batch) + tuple(shape))
        if j == 0:
            x = np.reshape(offset, np.shape(offset) + (1,) * r) + x
        args.append(x)
    u = np.broadcast_to(phi(*args), batch + tuple(s.n_points for s, _ in axes))
    for space, time in reversed(axes):
        u = _parallel_sweep(u, theta, time, space, grids.threads)
    return u


def _warn_if_coarse(fine: float, coarse: float, tol: float):
    est = abs(fine - coarse) / 3.0
    if est > tol:
        warnings.warn(f"grid under-resolved: Richardson error estimate {est:.3g} exceeds {tol:.3g}",
                      GridResolutionWarning, stacklevel=3)


def g_expectation_cylinder(c: CylinderFunction, theta: VolatilityInterval, grids: CylinderGrids | None = None,
                           check: bool = True) -> float:
    """E-hat[phi(increments)] by backward recursion; warns with :class:`GridResolutionWarning`."""
    grids = grids or CylinderGrids()
    value = float(_recurse(c.phi, (), c.intervals, 0.0, theta, grids))
    if check:
        coarse = float(_recurse(c.phi, (), c.intervals, 0.0, theta, grids.coarsened()))
        _warn_if_coarse(value, coarse, grids.richardson_tol)
    return value


def _split_at(c: CylinderFunction, s: float) -> int:
    """Number of cylinder times t_i <= s."""
    return sum(1 for t in c.times if t <= s + _TIME_TOL)


def _conditional(c: CylinderFunction, s: float, observed: Sequence, b_s, theta, grids) -> np.ndarray:
    j = _split_at(c, s)
    obs = [np.asarray(x, dtype=np.float64) for x in observed]
    prev = [np.zeros(())] + obs
    incs = [b - a for a, b in zip(prev, prev[1:])]
    if j == c.n:
        return np.asarray(c.phi(*incs))
    last = prev[-1]
    partial = np.asarray(b_s, dtype=np.float64) - last if b_s is not None else np.zeros(())
    horizons = (c.times[j] - s,) + c.intervals[j + 1:]
    return _recurse(c.phi, incs, horizons, partial, theta, grids)


def conditional_g_expectation(c: CylinderFunction, s: float, observed: Sequence[float], theta: VolatilityInterval,
                              grids: CylinderGrids | None = None, b_s: float | None = None) -> float:
    """E-hat_s[phi] with the path values ``observed = (B_{t_i})_{t_i <= s}`` held constant.

    When s falls strictly inside an interval, ``b_s`` is the path value at s;
    it defaults to the last observed value (no movement since then).
    """
    if not (math.isfinite(s) and s >= 0):
        raise ValidationError(f"s must be a nonnegative time, got {s}")
    j = _split_at(c, s)
    if len(observed) != j:
        raise ValidationError(f"{j} cylinder times are <= s={s}, so {j} observed values are needed, got {len(observed)}")
    return float(_conditional(c, s, list(observed), b_s, theta, grids or CylinderGrids()))


def tower_check(c: CylinderFunction, s: float, theta: VolatilityInterval, grids: CylinderGrids | None = None,
                cfg: SimConfig | None = None) -> tuple[float, float]:
    """(direct value, value of E-hat[E-hat_s[phi]]).

    The inner conditional expectation is tabulated on a grid of observed path
    values, linearly interpolated back onto increment coordinates, and then
    integrated to time 0 like an ordinary cylinder function of the first
    increments. ``cfg`` is accepted for interface symmetry with the MC check
    and not used.
    """
    grids = grids or CylinderGrids()
    j = _split_at(c, s)
    if not 1 <= j < c.n or abs(c.times[j - 1] - s) > _TIME_TOL:
        raise ValidationError(f"s={s} must be one of the intermediate cylinder times {c.times[:-1]}")
    direct = g_expectation_cylinder(c, theta, grids, check=False)

    # inner: tabulate on path-value grids for B_{t_1}, ..., B_{t_j}
    value_axes = [default_space_grid(theta, t, grids.n_points).nodes for t in c.times[:j]]
    mesh = np.meshgrid(*value_axes, indexing="ij")
    inner = _conditional(c, s, mesh, None, theta, grids)
    table = RegularGridInterpolator(value_axes, inner, method="linear", bounds_error=False, fill_value=None)

    # outer: increments d_1..d_j on the slot grids, path values are their partial sums
    inc_axes = [grids.axis(theta, h)[0].nodes for h in c.intervals[:j]]
    incs = np.meshgrid(*inc_axes, indexing="ij")
    paths = np.cumsum(np.stack(incs), axis=0)
    terminal = table(np.moveaxis(paths, 0, -1))
    u = terminal
    for h in reversed(c.intervals[:j]):
        space, time = grids.axis(theta, h)
        u = _parallel_sweep(u, theta, time, space, grids.threads)
    return direct, float(u)


def _slot_policies(c: CylinderFunction, theta: VolatilityInterval, grids: CylinderGrids):
    """Bang-bang sign tables per slot: ``table[k][row, x_1..x_{k-1}, y]`` is True where sigma_high is optimal."""
    axes = [grids.axis(theta, h) for h in c.intervals]
    r = c.n
    args = []
    for j, (space, _) in enumerate(axes):
        shape = [1] * r
        shape[j] = space.n_points
        args.append(space.nodes.reshape(shape))
    u = np.broadcast_to(c.phi(*args), tuple(s.n_points for s, _ in axes))
    tables = [None] * r
    for k in range(r - 1, -1, -1):
        space, time = axes[k]
        rows = _sweep(u, theta, time.dt, space.dx, time.n_steps, keep_rows=True)
        tables[k] = _second_difference(rows, space.dx**2) >= 0.0
        u = rows[0][..., space.center]
    return axes, tables


def cylinder_mc_check(c: CylinderFunction, theta: VolatilityInterval, cfg: SimConfig,
                      grids: CylinderGrids | None = None, threads: int = 1) -> tuple[float, Estimate]:
    """(PDE value, MC estimate under the piecewise bang-bang feedback control).

    On (t_{k-1}, t_k] the control reads the completed increments and the
    running partial increment, and picks sigma_high where the slot-k value
    function is locally convex. Every cylinder time must be a node of
    ``cfg.grid``.
    """
    grids = grids or CylinderGrids(n_points=101)
    pde = g_expectation_cylinder(c, theta, grids, check=False)
    axes, tables = _slot_policies(c, theta, grids)
    grid = cfg.grid
    nodes = [0] + [grid.node_index(t) for t in c.times]
    slot_of_step = np.searchsorted(nodes[1:], np.arange(grid.n_steps), side="right")
    if nodes[-1] > grid.n_steps:
        raise ValidationError("cylinder times exceed the simulation horizon")
    lo, hi = theta.sigma_low, theta.sigma_high

    def values(dW, _idx):
        m = dW.shape[1]
        b = np.zeros(m)
        incs = []
        start_b = np.zeros(m)
        for k in range(nodes[-1]):
            slot = int(slot_of_step[k])
            space, time = axes[slot]
            y = b - start_b
            row = min(int(round((k - nodes[slot]) * grid.dt / time.dt)), time.n_steps)
            index = (np.full(m, row),) + tuple(axes[i][0].nearest(incs[i]) for i in range(slot)) + (space.nearest(y),)
            th = np.where(tables[slot][index], hi, lo)
            b = b + th * dW[k]
            if k + 1 == nodes[slot + 1]:
                incs.append(b - start_b)
                start_b = b
        return c.phi(*incs)[None, :]

    est = monte_carlo(values, 1, cfg, threads)[0]
    return pde, est
