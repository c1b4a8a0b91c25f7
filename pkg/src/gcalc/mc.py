"""Reproducible Monte Carlo for controlled Brownian paths and the sup over controls.

Paths are simulated in fixed blocks of ``BLOCK_SIZE`` consecutive path
indices. Each block's statistics are computed independently and merged in
block order, so results do not depend on how many threads ran the blocks.
All members of a control family reuse the same increments (common random
numbers).

Block arrays are time-major: increments have shape ``(n_steps, m)`` and
paths ``(n_steps + 1, m)``, so column ``j`` is one path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .controls import ControlFamily, controls_at
from .core import Estimate, NumericError, PayoffSpec, RoughLift, TimeGrid, ValidationError, VolatilityInterval, eval_payoff
from .rng import standard_normals

__all__ = [
    "BLOCK_SIZE",
    "DEFAULT_N_PATHS",
    "DEFAULT_N_STEPS",
    "SimConfig",
    "SupResult",
    "brownian_increments",
    "block_increments",
    "simulate_block",
    "control_block",
    "running_sum",
    "simulate_controlled_path",
    "qv_bounds",
    "monte_carlo",
    "estimate_expectation",
    "sup_over_controls",
    "sup_of_functional",
]

BLOCK_SIZE = 4096
DEFAULT_N_PATHS = 100_000
DEFAULT_N_STEPS = 512


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    grid: TimeGrid
    seed: int = 0

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 2:
            raise ValidationError("n_paths must be an integer >= 2")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class SupResult:
    best: Estimate
    per_member: tuple
    best_member: int | str

    def __post_init__(self):
        if self.best.mean != max(e.mean for e in self.per_member):
            raise ValidationError("best estimate must carry the largest member mean")

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "per_member": [e.to_dict() for e in self.per_member],
            "best_member": self.best_member,
        }


def block_increments(cfg: SimConfig, start: int, stop: int) -> np.ndarray:
    """Brownian increments for paths ``start..stop-1``, shape ``(n_steps, stop - start)``."""
    z = standard_normals(cfg.seed, np.arange(start, stop), cfg.grid.n_steps)
    return math.sqrt(cfg.grid.dt) * z


def brownian_increments(cfg: SimConfig, path_index: int) -> np.ndarray:
    """The ``n_steps`` increments of one path; a pure function of (seed, path_index, step)."""
    if not 0 <= path_index < cfg.n_paths:
        raise ValidationError(f"path_index {path_index} outside [0, {cfg.n_paths})")
    return block_increments(cfg, path_index, path_index + 1)[:, 0]


def running_sum(steps: np.ndarray) -> np.ndarray:
    """Left-to-right partial sums along axis 0 with a leading zero row.

    Same additions in the same order as ``np.cumsum``, but row by row, which
    is much faster for time-major blocks.
    """
    out = np.empty((steps.shape[0] + 1,) + steps.shape[1:])
    out[0] = 0.0
    for k in range(steps.shape[0]):
        np.add(out[k], steps[k], out=out[k + 1])
    return out


def control_block(f: ControlFamily, member: int, dW: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Just the controls theta of :func:`simulate_block`, skipping B when nothing reads it."""
    if f.is_state_free:
        col = np.array([controls_at(f, k, 0.0, member, grid) for k in range(dW.shape[0])])[:, None]
        return np.broadcast_to(col, dW.shape)
    return simulate_block(f, member, dW, grid)[2]


def simulate_block(f: ControlFamily, member: int, dW: np.ndarray, grid: TimeGrid):
    """Controlled paths B and their quadratic variation for a block of increments.

    B[k+1] = B[k] + theta_k dW_k and QV[k+1] = QV[k] + theta_k^2 dt, with theta_k
    chosen from B at t_k. Returns ``(B, QV, theta)`` time-major. For state-free
    families QV and theta are read-only broadcast views of a single column.
    """
    n, m = dW.shape
    if f.is_state_free:
        col = np.array([controls_at(f, k, 0.0, member, grid) for k in range(n)])[:, None]
        theta = np.broadcast_to(col, (n, m))
        steps = dW * col
        qv_col = np.zeros((n + 1, 1))
        np.cumsum((col * col) * grid.dt, axis=0, out=qv_col[1:])
        QV = np.broadcast_to(qv_col, (n + 1, m))
    else:
        theta = np.empty((n, m))
        steps = np.empty((n, m))
        b = np.zeros(m)
        for k in range(n):
            th = controls_at(f, k, b, member, grid)
            theta[k] = th
            steps[k] = dW[k] * th
            b = b + steps[k]
        QV = running_sum((theta * theta) * grid.dt)
    return running_sum(steps), QV, theta


def simulate_controlled_path(f: ControlFamily, member: int, cfg: SimConfig, path_index: int) -> RoughLift:
    """The lift (B^theta, <B^theta>) of one path under one family member."""
    dW = brownian_increments(cfg, path_index)[:, None]
    B, QV, _ = simulate_block(f, member, dW, cfg.grid)
    return RoughLift(cfg.grid, B[:, 0], np.array(QV[:, 0]))


def qv_bounds(grid: TimeGrid, theta: VolatilityInterval):
    """Lower and upper QV envelopes sigma^2 t_k, accumulated exactly as the simulator does."""
    n = grid.n_steps
    lo = np.zeros(n + 1)
    hi = np.zeros(n + 1)
    np.cumsum(np.full(n, theta.sigma_low * theta.sigma_low) * grid.dt, out=lo[1:])
    np.cumsum(np.full(n, theta.sigma_high * theta.sigma_high) * grid.dt, out=hi[1:])
    return lo, hi


def _block_stats(v: np.ndarray):
    # shifted by the first value: exact for constant samples and less cancellation
    first = v[..., 0]
    mean = first + np.mean(v - first[..., None], axis=-1)
    m2 = np.sum((v - mean[..., None]) ** 2, axis=-1)
    return mean, m2


def _merge(a, b):
    (na, ma, sa), (nb, mb, sb) = a, b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), sa + sb + delta * delta * (na * nb / n)


def monte_carlo(values_fn: Callable[[np.ndarray, np.ndarray], np.ndarray], n_members: int, cfg: SimConfig,
                threads: int = 1) -> list[Estimate]:
    """Run ``values_fn(dW_block, path_indices) -> (n_members, m)`` over all blocks.

    Returns one :class:`Estimate` per member. Block statistics are merged in
    path order whatever ``threads`` is.
    """
    starts = list(range(0, cfg.n_paths, BLOCK_SIZE))

    def run(start):
        stop = min(start + BLOCK_SIZE, cfg.n_paths)
        idx = np.arange(start, stop)
        vals = np.asarray(values_fn(block_increments(cfg, start, stop), idx), dtype=np.float64)
        vals = vals.reshape(n_members, stop - start)
        bad = ~np.isfinite(vals)
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise NumericError(f"non-finite value on path {start + int(i)} (member {int(j)})")
        mean, m2 = _block_stats(vals)
        return stop - start, mean, m2

    threads = max(1, int(threads))
    if threads == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    acc = parts[0]
    for part in parts[1:]:
        acc = _merge(acc, part)
    n, mean, m2 = acc
    out = []
    for j in range(n_members):
        se = math.sqrt(float(m2[j]) / (n - 1)) / math.sqrt(n)
        out.append(Estimate(float(mean[j]), se, n, cfg.seed))
    return out


def estimate_expectation(p: PayoffSpec, f: ControlFamily, member: int, cfg: SimConfig, threads: int = 1) -> Estimate:
    """Mean and standard error of p(B_T) under one control member."""
    if not 0 <= member < f.n_members:
        raise ValidationError(f"member {member} out of range")

    def values(dW, _idx):
        B, _, _ = simulate_block(f, member, dW, cfg.grid)
        return eval_payoff(p, B[-1])[None, :]

    return monte_carlo(values, 1, cfg, threads)[0]


def _sup(per_member: list[Estimate], f: ControlFamily) -> SupResult:
    j = int(np.argmax([e.mean for e in per_member]))
    label = "feedback" if f.kind == "feedback" else j
    return SupResult(per_member[j], tuple(per_member), label)


def sup_of_functional(fn: Callable[[np.ndarray, np.ndarray, int], np.ndarray], f: ControlFamily, cfg: SimConfig,
                      threads: int = 1) -> SupResult:
    """max over members of E[fn(B, QV, member)], where ``fn`` maps time-major paths to per-path values."""
    members = range(f.n_members)

    def values(dW, _idx):
        rows = []
        for j in members:
            B, QV, _ = simulate_block(f, j, dW, cfg.grid)
            rows.append(fn(B, QV, j))
        return np.stack(rows)

    return _sup(monte_carlo(values, f.n_members, cfg, threads), f)


def sup_over_controls(p: PayoffSpec, f: ControlFamily, cfg: SimConfig, threads: int = 1) -> SupResult:
    """max over family members of E[p(B_T^theta)], common random numbers throughout."""
    return sup_of_functional(lambda B, _QV, _j: eval_payoff(p, B[-1]), f, cfg, threads)
