"""
Bohmian trajectories of a spreading packet
==========================================

A free Gaussian spreads; the particles it guides spread with it. We follow
an ensemble drawn from |psi(0)|^2 and check that it is still distributed
as |psi(T)|^2, then look at the quantum potential that drives the spreading.
"""

import numpy as np

from bohmsemi.bohmian import advance_trajectory, equivariance_test, propagate_frames, quantum_potential
from bohmsemi.grid import Grid1D, PotentialField, WaveFunction1D, free_width, gaussian_packet

############################################################
# Set up a packet at rest, sigma = 1, on a grid wide enough for T = 2

grid = Grid1D.centered(15.0, 1201)
wf0 = WaveFunction1D(grid, gaussian_packet(grid.x, 0.0, 1.0).astype(complex))
V = PotentialField.zeros(grid)
T = 2.0

############################################################
# One trajectory: for a packet at rest x(t) = x0 * width(t) / width(0)

frames = propagate_frames(wf0, V, 1.0, 0.01, 200)
traj = advance_trajectory(frames, 1.0, 0.01)
print("x(T) numerical :", traj.positions[-1, 0])
print("x(T) scaling   :", free_width(T))

############################################################
# Ensemble of 10^4 particles: KS distance to |psi(T)|^2

ks, details = equivariance_test(wf0, V, 1.0, 10000, T, seed=7, return_details=True)
print(f"KS at t=0: {details['ks_initial']:.4f}   KS at t=T: {ks:.4f}")

############################################################
# The quantum potential is an inverted parabola, pushing particles outward

Q = quantum_potential(wf0)
for x in (-2.0, 0.0, 2.0):
    i = np.argmin(abs(grid.x - x))
    print(f"Q({x:+.0f}) = {Q.values[i]:+.4f}")
