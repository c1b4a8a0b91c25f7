"""G-SDEs through their per-control classical representatives.

For a control theta the G-SDE

    dX = b(X) dt + h(X) d<B> + s(X) dB

becomes the classical SDE dX = b dt + h theta^2 dt + s theta dW, which we
integrate with Euler-Maruyama on the same increments that drive the
controlled Brownian path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .controls import ControlFamily
from .core import (
    NumericError,
    PayoffSpec,
    RoughLift,
    SamplePath,
    ValidationError,
    VolatilityInterval,
    eval_payoff,
    payoff_derivatives,
)
from .mc import SimConfig, SupResult, _sup, brownian_increments, control_block, monte_carlo, simulate_block

__all__ = [
    "Coefficient",
    "GSdeSpec",
    "GeometricSpec",
    "euler_block",
    "euler_terminal",
    "euler_solve_family_member",
    "closed_form_geometric",
    "geometric_case_formula",
    "g_expectation_geometric_mc",
    "g_ito_residual",
    "geometric_strong_error",
    "moment_bound",
]


@dataclass(frozen=True)
class Coefficient:
    """``a*x + c``; the closed set keeps every coefficient Lipschitz with linear growth."""

    kind: str  # "linear" | "affine" | "constant"
    a: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "affine", "constant"):
            raise ValidationError(f"unknown coefficient kind {self.kind!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.c)):
            raise ValidationError("coefficient parameters must be finite")

    @classmethod
    def linear(cls, a):
        return cls("linear", a=float(a))

    @classmethod
    def affine(cls, a, c):
        return cls("affine", a=float(a), c=float(c))

    @classmethod
    def constant(cls, c):
        return cls("constant", c=float(c))

    @classmethod
    def zero(cls):
        return cls("constant", c=0.0)

    def __call__(self, x):
        if self.kind == "linear":
            return self.a * x
        if self.kind == "constant":
            return np.full_like(np.asarray(x, dtype=np.float64), self.c)
        return self.a * x + self.c

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.c == 0.0


@dataclass(frozen=True)
class GSdeSpec:
    drift: Coefficient
    qv_drift: Coefficient
    diffusion: Coefficient
    x0: float


@dataclass(frozen=True)
class GeometricSpec:
    """dX = sigma X dB + gamma X d<B>, X_0 = x0 > 0."""

    sigma: float
    gamma: float
    x0: float = 1.0

    def __post_init__(self):
        if not self.x0 > 0:
            raise ValidationError(f"x0 must be positive, got {self.x0}")

    def as_sde(self) -> GSdeSpec:
        return GSdeSpec(Coefficient.zero(), Coefficient.linear(self.gamma), Coefficient.linear(self.sigma), self.x0)


def _euler_steps(s: GSdeSpec, theta: np.ndarray, dW: np.ndarray, dt: float):
    """Yield the Euler state after each step (time-major inputs).

    Terms whose coefficient is identically zero are skipped.
    """
    th2dt = (theta * theta) * dt
    thdw = dW * theta
    x = np.full(dW.shape[1], float(s.x0))
    for k in range(dW.shape[0]):
        nxt = x
        if not s.drift.is_zero:
            nxt = nxt + s.drift(x) * dt
        if not s.qv_drift.is_zero:
            nxt = nxt + s.qv_drift(x) * th2dt[k]
        if not s.diffusion.is_zero:
            nxt = nxt + s.diffusion(x) * thdw[k]
        if not np.isfinite(nxt).all():
            i = int(np.argwhere(~np.isfinite(nxt))[0][0])
            raise NumericError(f"non-finite state at step {k + 1} (block path {i})")
        x = nxt
        yield x


def euler_block(s: GSdeSpec, theta: np.ndarray, dW: np.ndarray, dt: float) -> np.ndarray:
    """Euler-Maruyama over a time-major block; returns X with shape ``(n_steps + 1, m)``.

    X[k+1] = X[k] + b(X[k]) dt + h(X[k]) theta_k^2 dt + s(X[k]) theta_k dW_k.
    """
    n, m = dW.shape
    X = np.empty((n + 1, m))
    X[0] = s.x0
    for k, x in enumerate(_euler_steps(s, theta, dW, dt)):
        X[k + 1] = x
    return X


def euler_terminal(s: GSdeSpec, theta: np.ndarray, dW: np.ndarray, dt: float, sup_square: bool = False):
    """Terminal Euler state (or running max of X^2 when ``sup_square``) without storing paths."""
    x = np.full(dW.shape[1], float(s.x0))
    peak = x * x
    for x in _euler_steps(s, theta, dW, dt):
        if sup_square:
            peak = np.maximum(peak, x * x)
    return peak if sup_square else x


def euler_solve_family_member(s: GSdeSpec, f: ControlFamily, member: int, cfg: SimConfig,
                              path_index: int) -> SamplePath:
    """One Euler path of X^theta; the control reads the driving path B at t_k."""
    dW = brownian_increments(cfg, path_index)[:, None]
    _, _, theta = simulate_block(f, member, dW, cfg.grid)
    return SamplePath(cfg.grid, euler_block(s, theta, dW, cfg.grid.dt)[:, 0])


def closed_form_geometric(g: GeometricSpec, lift: RoughLift) -> SamplePath:
    """x0 exp(sigma B_t + (gamma - sigma^2/2) <B>_t), evaluated node by node on the lift."""
    x = g.x0 * np.exp(g.sigma * lift.b + (g.gamma - 0.5 * g.sigma**2) * lift.qv)
    return SamplePath(lift.grid, x)


def geometric_case_formula(g: GeometricSpec, theta: VolatilityInterval, t: float) -> float:
    """sup over constant theta in [sigma_low, sigma_high] of x0 exp(gamma theta^2 t)."""
    level = theta.sigma_high if g.gamma > 0 else theta.sigma_low
    return g.x0 * math.exp(g.gamma * level**2 * t)


def _stacked_controls(f: ControlFamily, dW: np.ndarray, cfg: SimConfig):
    """Controls of every member stacked along the path axis, with matching increments."""
    thetas = [control_block(f, j, dW, cfg.grid) for j in range(f.n_members)]
    return np.concatenate(thetas, axis=1), np.tile(dW, (1, f.n_members))


def g_expectation_geometric_mc(g: GeometricSpec, f: ControlFamily, cfg: SimConfig, threads: int = 1) -> SupResult:
    """sup over family members of the mean Euler terminal value."""
    s = g.as_sde()
    n_members = f.n_members

    def values(dW, _idx):
        theta, dW_all = _stacked_controls(f, dW, cfg)
        return euler_terminal(s, theta, dW_all, cfg.grid.dt).reshape(n_members, -1)

    return _sup(monte_carlo(values, n_members, cfg, threads), f)


def g_ito_residual(p: PayoffSpec, lift: RoughLift) -> float:
    """f(B_T) - f(B_0) - sum f'(B_k) dB_k - 1/2 sum f''(B_k) dQV_k with left-point sums."""
    d1, d2 = payoff_derivatives(p, lift.b[:-1])
    dB = np.diff(lift.b)
    dQ = np.diff(lift.qv)
    lhs = eval_payoff(p, lift.b[-1]) - eval_payoff(p, lift.b[0])
    return float(lhs - np.sum(d1 * dB) - 0.5 * np.sum(d2 * dQ))


def geometric_strong_error(g: GeometricSpec, f: ControlFamily, member: int, cfg: SimConfig) -> float:
    """Mean over paths of (Euler X_T - closed form X_T)^2 on the same lifts."""
    s = g.as_sde()

    def values(dW, _idx):
        B, QV, theta = simulate_block(f, member, dW, cfg.grid)
        X = euler_terminal(s, theta, dW, cfg.grid.dt)
        exact = g.x0 * np.exp(g.sigma * B[-1] + (g.gamma - 0.5 * g.sigma**2) * QV[-1])
        return ((X - exact) ** 2)[None, :]

    return monte_carlo(values, 1, cfg)[0].mean


def moment_bound(s: GSdeSpec, f: ControlFamily, cfg: SimConfig) -> tuple[float, float]:
    """(max over members of mean sup_k X_k^2, smallest C with that <= C (1 + x0^2) e^{C T})."""
    n_members = f.n_members

    def values(dW, _idx):
        theta, dW_all = _stacked_controls(f, dW, cfg)
        return euler_terminal(s, theta, dW_all, cfg.grid.dt, sup_square=True).reshape(n_members, -1)

    worst = max(e.mean for e in monte_carlo(values, n_members, cfg))
    T, scale = cfg.grid.horizon, 1.0 + s.x0**2
    fn = lambda C: C * scale * math.exp(C * T) - worst  # noqa: E731
    hi = 1.0
    while fn(hi) < 0:
        hi *= 2.0
    return worst, brentq(fn, 0.0, hi, xtol=1e-12)

