"""Sublinear expectations under volatility uncertainty.

The G-expectation of a payoff is the worst case, over volatility paths
inside [sigma_low, sigma_high], of its classical expectation. This package
computes it three ways (G-heat PDE, Monte Carlo sup over controls, cylinder
recursion) and evaluates G-SDE solutions and path functionals on rough lifts.
"""

from .controls import ControlFamily, ControlPath, control_at, controls_at, max_distribution_expectation
from .core import (
    Estimate,
    NumericError,
    PayoffSpec,
    RoughLift,
    SamplePath,
    TimeGrid,
    UnsupportedPayoffError,
    ValidationError,
    VolatilityInterval,
    eval_payoff,
    parse_payoff,
    payoff_derivatives,
)
from .cylinder import (
    CylinderFunction,
    CylinderGrids,
    CylinderPayoff,
    GridResolutionWarning,
    conditional_g_expectation,
    g_expectation_cylinder,
    parse_cylinder_payoff,
    tower_check,
)
from .gheat import (
    CFLError,
    FeedbackPolicy,
    SpaceGrid,
    ValueGrid,
    extract_policy,
    g_expectation_pde,
    g_operator,
    generator_limit_check,
    semigroup_compose,
    solve_g_heat,
)
from .gsde import (
    Coefficient,
    GeometricSpec,
    GSdeSpec,
    closed_form_geometric,
    euler_solve_family_member,
    g_expectation_geometric_mc,
    g_ito_residual,
    geometric_case_formula,
)
from .mc import SimConfig, SupResult, brownian_increments, estimate_expectation, simulate_controlled_path, sup_over_controls
from .roughlift import PathFunctional, eval_functional, measure_independence_check, partition_qv

__version__ = "0.1.0"
