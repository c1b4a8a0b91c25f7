# Geometric G-Brownian motion dX = sigma X dB + gamma X d<B>.
#
# The mean of X_T under a constant volatility v is exp(gamma v^2 T), so the
# worst case sits at the top of the interval when gamma > 0 and at the
# bottom when gamma < 0. Euler-Maruyama over a grid of constant controls
# recovers both.

from gcalc import ControlFamily, GeometricSpec, SimConfig, TimeGrid, VolatilityInterval
from gcalc import g_expectation_geometric_mc, geometric_case_formula

theta = VolatilityInterval(0.5, 1.0)
family = ControlFamily.constant_grid(theta, 9)
cfg = SimConfig(n_paths=20_000, grid=TimeGrid(1.0, 128), seed=2024)

for gamma in (0.1, -0.1):
    g = GeometricSpec(sigma=0.2, gamma=gamma)
    res = g_expectation_geometric_mc(g, family, cfg)
    print(f"gamma={gamma:+.1f}: MC {res.best.mean:.5f} +- {res.best.std_error:.5f} "
          f"at level {family.levels[res.best_member]}, formula {geometric_case_formula(g, theta, 1.0):.5f}")
