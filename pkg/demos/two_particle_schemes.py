"""
Mean-field versus Bohmian semi-classical dynamics
=================================================

Particle 1 starts in a superposition of two counter-propagating packets and
is coupled to a heavy particle 2 through V = lam x1 x2. The mean-field
scheme pushes particle 2 with the average force, which vanishes by symmetry.
The Bohmian scheme pushes it with the force at the actual position X1,
which is what the full two-particle solution does.
"""

import numpy as np

from bohmsemi.grid import Grid1D, Grid2D
from bohmsemi.semiclassical import bilinear, compare_two_particle, splitting_state

############################################################
# A modest grid keeps this to a few seconds

grid = Grid2D(Grid1D(-25.0, 25.0, 160), Grid1D(-4.0, 4.0, 64))
psi0 = splitting_state(grid, k=2.0, sigma1=1.0, sigma2=0.5)
V = bilinear(0.05)

############################################################
# All three schemes from the same initial data (X1 = 1 is in the right-moving branch)

res = compare_two_particle(psi0, X1=1.0, X2=0.2, V=V, m1=1.0, m2=100.0, dt=0.02, nsteps=300)
print("X2 at the end  full:", res.full["X2"][-1], " meanfield:", res.meanfield["X2"][-1],
      " bohmian-SC:", res.bohmian["X2"][-1])
print(f"RMS error of X2  meanfield {res.err_meanfield:.2e}   bohmian-SC {res.err_bohmian:.2e}")

############################################################
# Size of the term the conditional dynamics neglects, relative to the
# conditional Hamiltonian; a heavier particle 2 makes it smaller

print(f"interaction ratio at t=0 {res.ratio_initial:.3f}, at the end {res.ratio_final:.3f}")
heavy = compare_two_particle(psi0, 1.0, 0.2, V, 1.0, 1000.0, 0.02, 300)
print(f"with m2 = 1000 the final ratio is {heavy.ratio_final:.4f}")
