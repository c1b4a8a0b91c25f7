"""Rough lifts (B, <B>) and deterministic functionals evaluated on them.

A lift stores the path together with the quadratic variation generated
alongside it. :func:`partition_qv` re-estimates the quadratic variation from
the path alone by partition sums, so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PayoffSpec, RoughLift, SamplePath, UnsupportedPayoffError, ValidationError, eval_payoff, payoff_derivatives
from .gsde import GeometricSpec, closed_form_geometric

__all__ = [
    "RoughLift",
    "PathFunctional",
    "IndependenceReport",
    "partition_qv",
    "eval_functional",
    "measure_independence_check",
]


@dataclass(frozen=True)
class PathFunctional:
    """``terminal_payoff`` -> phi(B_T); ``geometric`` -> closed-form X_T;
    ``ito_integral`` -> sum f'(B_k) dB_k + 1/2 sum f''(B_k) dQV_k."""

    kind: str
    payoff: PayoffSpec | None = None
    geometric: GeometricSpec | None = None

    def __post_init__(self):
        if self.kind in ("terminal_payoff", "ito_integral"):
            if self.payoff is None:
                raise ValidationError(f"{self.kind} functional needs a payoff")
            if self.kind == "ito_integral" and not self.payoff.is_smooth:
                raise UnsupportedPayoffError(f"{self.payoff.kind} payoff is not twice differentiable")
        elif self.kind == "geometric":
            if self.geometric is None:
                raise ValidationError("geometric functional needs a GeometricSpec")
        else:
            raise ValidationError(f"unknown functional kind {self.kind!r}")

    @classmethod
    def terminal_payoff(cls, p: PayoffSpec):
        return cls("terminal_payoff", payoff=p)

    @classmethod
    def geometric_solution(cls, g: GeometricSpec):
        return cls("geometric", geometric=g)

    @classmethod
    def ito_integral(cls, p: PayoffSpec):
        return cls("ito_integral", payoff=p)


@dataclass(frozen=True)
class IndependenceReport:
    n_lifts: int
    n_groups: int
    max_spread: float

    @property
    def passed(self) -> bool:
        return self.max_spread == 0.0


def partition_qv(b: SamplePath, block: int) -> np.ndarray:
    """Running sum of squared increments over blocks of ``block`` steps.

    Values at block boundaries are the partition sums; in between they are
    linearly interpolated, giving one value per grid node.
    """
    n = b.grid.n_steps
    if int(block) != block or block < 1 or n % block:
        raise ValidationError(f"block {block} must be a positive divisor of n_steps={n}")
    coarse = b.values[::block]
    sums = np.concatenate([[0.0], np.cumsum(np.diff(coarse) ** 2)])
    if block == 1:
        return sums
    k = np.arange(n + 1)
    return np.interp(k, k[::block], sums)


def eval_functional(f: PathFunctional, lift: RoughLift) -> float:
    """Evaluate ``f`` on a lift. Pure: the lift is the only input."""
    if f.kind == "terminal_payoff":
        return eval_payoff(f.payoff, float(lift.b[-1]))
    if f.kind == "geometric":
        return float(closed_form_geometric(f.geometric, lift).values[-1])
    d1, d2 = payoff_derivatives(f.payoff, lift.b[:-1])
    return float(np.sum(d1 * np.diff(lift.b)) + 0.5 * np.sum(d2 * np.diff(lift.qv)))


def measure_independence_check(f: PathFunctional, lifts: Sequence[RoughLift]) -> IndependenceReport:
    """Group lifts by exact equality and measure the output spread within each group.

    Lifts may come from different control families or seeds; only the lift
    itself may influence the output, so every spread must be zero.
    """
    groups: dict[bytes, list[float]] = {}
    for lift in lifts:
        groups.setdefault(lift.key(), []).append(eval_functional(f, lift))
    spread = 0.0
    for outs in groups.values():
        spread = max(spread, max(outs) - min(outs))
    return IndependenceReport(len(lifts), len(groups), spread)
