"""Bohmian trajectories and semi-classical approximations.

Crank-Nicolson propagation in one and two dimensions, guidance-equation
integration, mean-field versus Bohmian back-reaction for two particles and
for a softened Schroedinger-Newton model, and the flat FLRW mini-superspace
with a massless scalar field.
"""

__version__ = "0.1.0"
