"""Locate the van der Pol limit cycle from the averaged amplitude equation.

The first averaged function of the polar system has a simple zero at r = 2.
For each eps the zero continues to a fixed point of the time-2pi map of the
full equation, and the fixed point approaches 2 as eps shrinks.
"""

from avgkit import corpus
from avgkit.melnikov import averaged_f
from avgkit.orbits import find_zero, validate_orbit

system = corpus.load("van_der_pol_polar")
zero = find_zero(lambda z: averaged_f(system, z, order=1)[0], [1.5])
print(f"zero of f_1: r* = {zero.z_star[0]:.12f}  (simple: {zero.simple}, df_1/dr = {zero.jacobian[0, 0]:.6f})")

validation = validate_orbit(system, zero.z_star, [0.1, 0.05, 0.02, 0.01])
print(f"{'eps':>6}  {'r_eps':>16}  {'r_eps - r*':>12}  {'|displacement|':>14}")
for e in validation.entries:
    print(f"{e.eps:6.2f}  {e.z_eps[0]:16.12f}  {e.distance:12.3e}  {e.displacement_norm:14.3e}")
print(f"log-log slope of r_eps - r*: {validation.slope_estimate:.3f}")
