# Worst-case expectations from the G-heat equation.
#
# With volatility somewhere in [0.5, 1], the sublinear expectation of a
# convex payoff picks the top volatility and a concave one the bottom.

from gcalc import VolatilityInterval, extract_policy, g_expectation_pde, parse_payoff, solve_g_heat
from gcalc.gheat import default_space_grid, default_time_grid

theta = VolatilityInterval(0.5, 1.0)

for text in ("quadratic", "neg_quadratic", "identity", "call:K=0", "butterfly:K=0,w=1"):
    p = parse_payoff(text)
    print(f"{text:20s} E-hat = {g_expectation_pde(p, theta):+.6f}")

# x^2 gives sigma_high^2 T = 1 and -x^2 gives -sigma_low^2 T = -0.25.
# The butterfly is neither convex nor concave, so the optimal volatility
# changes with (t, x). Look at the bang-bang policy along t = 0.
p = parse_payoff("butterfly:K=0,w=1")
space = default_space_grid(theta, 1.0)
v = solve_g_heat(p, theta, default_time_grid(1.0, space, theta), space)
policy = extract_policy(v, theta)
for x in (-3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0):
    print(f"  x = {x:+.1f}: sigma* at t=0 is {policy.lookup(0.0, x)}")
