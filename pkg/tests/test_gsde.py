import math

import numpy as np
import pytest

from gcalc.controls import ControlFamily
from gcalc.core import (
    NumericError,
    PayoffSpec,
    RoughLift,
    TimeGrid,
    UnsupportedPayoffError,
    ValidationError,
    VolatilityInterval,
    eval_payoff,
)
from gcalc.gsde import (
    Coefficient,
    GeometricSpec,
    GSdeSpec,
    closed_form_geometric,
    euler_solve_family_member,
    g_expectation_geometric_mc,
    g_ito_residual,
    geometric_case_formula,
    geometric_strong_error,
    moment_bound,
)
from gcalc.mc import SimConfig, simulate_controlled_path


def hand_lift(b, qv, T=1.0):
    return RoughLift(TimeGrid(T, len(b) - 1), b, qv)


def test_degenerate_sde_is_the_path(theta):
    cfg = SimConfig(4, TimeGrid(1.0, 64), seed=3)
    f = ControlFamily.constant_grid(theta, 2)
    s = GSdeSpec(Coefficient.zero(), Coefficient.zero(), Coefficient.constant(1.0), 0.0)
    x = euler_solve_family_member(s, f, 1, cfg, 2).values
    b = simulate_controlled_path(f, 1, cfg, 2).b
    np.testing.assert_array_equal(x, b)


def test_deterministic_ode(theta):
    cfg = SimConfig(2, TimeGrid(1.0, 8), seed=0)
    s = GSdeSpec(Coefficient.constant(1.0), Coefficient.zero(), Coefficient.constant(0.0), 2.0)
    x = euler_solve_family_member(s, ControlFamily.constant_grid(theta, 2), 0, cfg, 0).values
    np.testing.assert_array_equal(x, 2.0 + cfg.grid.times)


def test_euler_tracks_closed_form_on_same_lift(theta):
    g = GeometricSpec(0.2, 0.1)
    f = ControlFamily.constant_grid(theta, 3)
    cfg = SimConfig(2, TimeGrid(1.0, 1024), seed=12)
    for i in range(2):
        x = euler_solve_family_member(g.as_sde(), f, 2, cfg, i).values
        exact = closed_form_geometric(g, simulate_controlled_path(f, 2, cfg, i)).values
        assert np.max(np.abs(x - exact)) < 5e-3


def test_closed_form_examples():
    lift = hand_lift([0.0, 0.3, -0.2], [0.0, 0.5, 1.0])
    assert closed_form_geometric(GeometricSpec(0.0, 1.0), lift).values[-1] == math.e
    np.testing.assert_array_equal(closed_form_geometric(GeometricSpec(1.0, 0.5), lift).values, np.exp(lift.b))
    zero = hand_lift([0.0] * 3, [0.0] * 3)
    np.testing.assert_array_equal(closed_form_geometric(GeometricSpec(0.7, -0.3, 2.5), zero).values, 2.5)


def test_case_formula(theta):
    assert geometric_case_formula(GeometricSpec(0.2, 0.1), theta, 1.0) == math.exp(0.1)
    assert geometric_case_formula(GeometricSpec(0.2, -0.1), theta, 1.0) == math.exp(-0.025)


def test_martingale_case_every_member(theta):
    cfg = SimConfig(20_000, TimeGrid(1.0, 64), seed=6)
    res = g_expectation_geometric_mc(GeometricSpec(0.2, 0.0), ControlFamily.constant_grid(theta, 3), cfg)
    for e in res.per_member:
        assert abs(e.mean - 1.0) <= 3 * e.std_error


def test_small_geometric_run_picks_extremes(theta):
    cfg = SimConfig(20_000, TimeGrid(1.0, 64), seed=6)
    f = ControlFamily.constant_grid(theta, 5)
    up = g_expectation_geometric_mc(GeometricSpec(0.2, 0.1), f, cfg)
    down = g_expectation_geometric_mc(GeometricSpec(0.2, -0.1), f, cfg)
    assert (up.best_member, down.best_member) == (4, 0)


def test_squaring_commutes_with_solving(theta):
    cfg = SimConfig(2, TimeGrid(1.0, 32), seed=1)
    x = euler_solve_family_member(GeometricSpec(0.3, 0.2).as_sde(), ControlFamily.constant_grid(theta, 2), 1, cfg, 0)
    np.testing.assert_array_equal(x.values * x.values, eval_payoff(PayoffSpec.quadratic(), x.values))


def test_ito_residual_quadratic_identity():
    rng = np.random.default_rng(7)
    b = np.concatenate([[0.0], np.cumsum(rng.normal(0, 0.1, 50))])
    qv = np.concatenate([[0.0], np.cumsum(rng.uniform(0.001, 0.02, 50))])
    lift = hand_lift(b, qv)
    expected = np.sum(np.diff(b) ** 2) - qv[-1]
    assert g_ito_residual(PayoffSpec.quadratic(), lift) == pytest.approx(expected, abs=1e-14)
    assert g_ito_residual(PayoffSpec.identity(), lift) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(UnsupportedPayoffError):
        g_ito_residual(PayoffSpec.call(0.0), lift)


def test_ito_residual_shrinks_with_refinement():
    f = ControlFamily.constant_grid(VolatilityInterval(0.5, 1.0), 2)
    rms = []
    for n in (128, 512):
        cfg = SimConfig(300, TimeGrid(1.0, n), seed=21)
        r = [g_ito_residual(PayoffSpec.quadratic(), simulate_controlled_path(f, 1, cfg, i)) for i in range(300)]
        rms.append(math.sqrt(np.mean(np.square(r))))
    assert rms[0] / rms[1] == pytest.approx(2.0, rel=0.25)


def test_strong_error_decreases(theta):
    g = GeometricSpec(0.5, 0.3)
    f = ControlFamily.constant_grid(theta, 2)
    errs = [geometric_strong_error(g, f, 1, SimConfig(2000, TimeGrid(1.0, n), seed=4)) for n in (128, 256, 512, 1024)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_moment_bound(theta):
    s = GeometricSpec(0.5, 0.3).as_sde()
    worst, C = moment_bound(s, ControlFamily.constant_grid(theta, 3), SimConfig(2000, TimeGrid(1.0, 64), seed=4))
    assert math.isfinite(worst) and worst >= 1.0
    assert C * 2.0 * math.exp(C) == pytest.approx(worst, rel=1e-9)


def test_divergence_is_numeric_error(theta):
    s = GSdeSpec(Coefficient.linear(1e308), Coefficient.zero(), Coefficient.zero(), 1.0)
    cfg = SimConfig(2, TimeGrid(1.0, 16), seed=0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericError, match="step"):
        euler_solve_family_member(s, ControlFamily.constant_grid(theta, 2), 0, cfg, 0)


def test_geometric_spec_validation():
    with pytest.raises(ValidationError):
        GeometricSpec(0.2, 0.1, x0=0.0)
