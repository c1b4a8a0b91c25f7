# Functions of several increments, phi(B_0.5, B_1 - B_0.5), and the
# conditional expectation given the path up to s = 0.5.
#
# Conditioning and then taking the expectation again gives the same answer
# as the direct computation (time consistency).

from gcalc import CylinderFunction, VolatilityInterval, conditional_g_expectation, g_expectation_cylinder
from gcalc import parse_cylinder_payoff, tower_check

theta = VolatilityInterval(0.5, 1.0)

c = CylinderFunction((0.5, 1.0), parse_cylinder_payoff("sum:quadratic,quadratic"))
print("E-hat[B_0.5^2 + (B_1 - B_0.5)^2] =", round(g_expectation_cylinder(c, theta), 6))
print("given B_0.5 = 0.3:              ", round(conditional_g_expectation(c, 0.5, [0.3], theta), 6))

# a product couples the increments: the sign of B_0.5 decides whether the
# second increment's call should see high or low volatility
c = CylinderFunction((0.5, 1.0), parse_cylinder_payoff("product:identity,call:K=0"))
direct, composed = tower_check(c, 0.5, theta)
print(f"E-hat[B_0.5 (B_1 - B_0.5)^+]: direct {direct:.6f}, via conditioning {composed:.6f}")
