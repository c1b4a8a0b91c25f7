# The same numbers by brute force: simulate B = int theta dW for many
# volatility controls and keep the best mean.
#
# Constant controls are enough for convex or concave payoffs. For the
# butterfly they are not: the best constant volatility falls short of the
# PDE value, and only the state-dependent bang-bang control closes the gap.

from gcalc import ControlFamily, PayoffSpec, SimConfig, TimeGrid, VolatilityInterval
from gcalc import extract_policy, g_expectation_pde, solve_g_heat, sup_over_controls
from gcalc.gheat import default_space_grid, default_time_grid

theta = VolatilityInterval(0.3, 1.0)
cfg = SimConfig(n_paths=40_000, grid=TimeGrid(1.0, 512), seed=2024)
constants = ControlFamily.constant_grid(theta, 9)

quad = sup_over_controls(PayoffSpec.quadratic(), constants, cfg)
print("x^2: best constant level", constants.levels[quad.best_member], "mean", round(quad.best.mean, 4))

p = PayoffSpec.butterfly(0.0, 1.0)
pde = g_expectation_pde(p, theta)
best_const = sup_over_controls(p, constants, cfg).best

space = default_space_grid(theta, 1.0)
v = solve_g_heat(p, theta, default_time_grid(1.0, space, theta), space)
feedback = ControlFamily.feedback(extract_policy(v, theta), theta)
fb = sup_over_controls(p, feedback, cfg).best

print(f"butterfly PDE value        {pde:.5f}")
print(f"best constant control      {best_const.mean:.5f} +- {best_const.std_error:.5f}")
print(f"bang-bang feedback control {fb.mean:.5f} +- {fb.std_error:.5f}")
