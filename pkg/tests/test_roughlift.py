import math

import numpy as np
import pytest

from gcalc.controls import ControlFamily, ControlPath
from gcalc.core import PayoffSpec, RoughLift, SamplePath, TimeGrid, UnsupportedPayoffError, ValidationError, VolatilityInterval
from gcalc.gsde import GeometricSpec, euler_solve_family_member, g_ito_residual
from gcalc.mc import SimConfig, simulate_controlled_path
from gcalc.roughlift import PathFunctional, eval_functional, measure_independence_check, partition_qv


def test_partition_qv_on_a_line():
    grid = TimeGrid(1.0, 100)
    qv = partition_qv(SamplePath(grid, grid.times), 1)
    assert qv[-1] == pytest.approx(0.01, abs=1e-15)


def test_partition_qv_blocks():
    grid = TimeGrid(1.0, 8)
    b = SamplePath(grid, [0, 1, 0, 1, 3, 3, 3, 3, 5])
    qv = partition_qv(b, 4)
    assert len(qv) == 9
    np.testing.assert_array_equal(qv[[0, 4, 8]], [0.0, 9.0, 13.0])
    assert qv[2] == 4.5  # linear inside the block
    with pytest.raises(ValidationError):
        partition_qv(b, 3)


def test_partition_qv_mean_matches_horizon():
    theta = VolatilityInterval(0.5, 1.0)
    f = ControlFamily.constant_grid(theta, 2)
    cfg = SimConfig(1000, TimeGrid(1.0, 256), seed=31)
    qv_t = [partition_qv(simulate_controlled_path(f, 1, cfg, i).path, 1)[-1] for i in range(1000)]
    assert np.mean(qv_t) == pytest.approx(1.0, abs=0.05)


def test_partition_qv_gap_halves_when_steps_quadruple():
    theta = VolatilityInterval(0.5, 1.0)
    f = ControlFamily.constant_grid(theta, 2)
    gaps = []
    for n in (128, 512):
        cfg = SimConfig(400, TimeGrid(1.0, n), seed=17)
        d = []
        for i in range(400):
            lift = simulate_controlled_path(f, 1, cfg, i)
            d.append(partition_qv(lift.path, 1)[-1] - lift.qv[-1])
        gaps.append(math.sqrt(np.mean(np.square(d))))
    assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.25)


def test_coarser_blocks_move_further_from_exact_qv():
    theta = VolatilityInterval(0.5, 1.0)
    f = ControlFamily.constant_grid(theta, 2)
    cfg = SimConfig(400, TimeGrid(1.0, 512), seed=17)
    rms = {1: [], 4: []}
    for i in range(400):
        lift = simulate_controlled_path(f, 1, cfg, i)
        for blk in rms:
            rms[blk].append(partition_qv(lift.path, blk)[-1] - lift.qv[-1])
    r1, r4 = (math.sqrt(np.mean(np.square(rms[b]))) for b in (1, 4))
    assert r4 / r1 == pytest.approx(2.0, rel=0.25)  # block 4 is an effective step of 4 dt


def hand_lift(b, qv):
    return RoughLift(TimeGrid(1.0, len(b) - 1), b, qv)


def test_eval_examples():
    lift = hand_lift([0.0, 1.0, 2.0], [0.0, 0.5, 1.0])
    assert eval_functional(PathFunctional.terminal_payoff(PayoffSpec.quadratic()), lift) == 4.0
    assert eval_functional(PathFunctional.geometric_solution(GeometricSpec(0.0, 1.0)), lift) == math.e
    f = PathFunctional.ito_integral(PayoffSpec.exponential(0.5))
    assert eval_functional(f, lift) == eval_functional(f, hand_lift([0.0, 1.0, 2.0], [0.0, 0.5, 1.0]))


def test_ito_functional_is_the_residual_complement():
    lift = hand_lift([0.0, 0.4, -0.1, 0.3], [0.0, 0.2, 0.3, 0.6])
    p = PayoffSpec.polynomial([1.0, -0.5, 2.0, 0.1])
    integrals = eval_functional(PathFunctional.ito_integral(p), lift)
    lhs = p(0.3) - p(0.0)
    assert integrals == pytest.approx(lhs - g_ito_residual(p, lift), abs=1e-14)


def test_functional_validation():
    with pytest.raises(UnsupportedPayoffError):
        PathFunctional.ito_integral(PayoffSpec.butterfly(0, 1))
    with pytest.raises(ValidationError):
        PathFunctional("terminal_payoff")
    with pytest.raises(ValidationError):
        PathFunctional("signature")


def test_same_lift_from_two_families_has_zero_spread():
    theta = VolatilityInterval(0.5, 1.0)
    cfg = SimConfig(6, TimeGrid(1.0, 64), seed=2024)
    fixed = ControlFamily.fixed(ControlPath(cfg.grid, np.full(64, 1.0), theta))
    grid_fam = ControlFamily.constant_grid(theta, 9)
    lifts = []
    for i in range(6):
        a = simulate_controlled_path(fixed, 0, cfg, i)
        b = simulate_controlled_path(grid_fam, 8, cfg, i)
        assert a.key() == b.key()
        lifts += [a, b]
    for f in (PathFunctional.terminal_payoff(PayoffSpec.butterfly(0, 1)),
              PathFunctional.geometric_solution(GeometricSpec(0.2, 0.1)),
              PathFunctional.ito_integral(PayoffSpec.quadratic())):
        rep = measure_independence_check(f, lifts)
        assert (rep.n_lifts, rep.n_groups, rep.max_spread, rep.passed) == (12, 6, 0.0, True)


def test_disjoint_lifts_vacuous_pass():
    lifts = [hand_lift([0.0, float(i)], [0.0, 0.5]) for i in range(4)]
    rep = measure_independence_check(PathFunctional.terminal_payoff(PayoffSpec.quadratic()), lifts)
    assert rep.n_groups == 4 and rep.passed


def test_functional_picture_matches_euler_picture():
    theta = VolatilityInterval(0.5, 1.0)
    g = GeometricSpec(0.2, 0.1)
    f = ControlFamily.constant_grid(theta, 3)
    cfg = SimConfig(20, TimeGrid(1.0, 1024), seed=9)
    gaps = []
    for i in range(20):
        via_lift = eval_functional(PathFunctional.geometric_solution(g), simulate_controlled_path(f, 1, cfg, i))
        via_sde = euler_solve_family_member(g.as_sde(), f, 1, cfg, i).values[-1]
        gaps.append((via_lift - via_sde) ** 2)
    assert np.mean(gaps) < 1e-4
