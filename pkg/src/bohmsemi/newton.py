"""One-dimensional Schroedinger-Newton dynamics with a softened kernel.

Mean-field version: the gravitational potential is sourced by m|psi|^2.
Bohmian version: it is sourced by the particle position X(t) alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import argrelmin

from .bohmian import DEFAULT_POLICY, Frames, NodePolicy, rk4_ensemble
from .grid import Grid1D, PotentialField, WaveFunction1D
from .propagate import CrankNicolson1D
from .quadrature import expectation_energy


@dataclass
class SNState:
    psi: WaveFunction1D
    X: float | None = None
    t: float = 0.0
    G: float = 1.0
    m: float = 1.0
    eps_soft: float = 0.1
    flags: int = 0

    def __post_init__(self):
        if not self.eps_soft > 0:
            raise ValueError("eps_soft must be positive")


@lru_cache(maxsize=8)
def _kernel(grid: Grid1D, eps_soft: float) -> np.ndarray:
    x = grid.x
    return 1.0 / np.sqrt((x[:, None] - x[None, :]) ** 2 + eps_soft**2)


def meanfield_potential(s: SNState) -> PotentialField:
    """V(x) = -G m^2 int |psi(y)|^2 / sqrt((x-y)^2 + eps^2) dy."""
    g = s.psi.grid
    rho = s.psi.density * g.weights()
    return PotentialField(-s.G * s.m**2 * (_kernel(g, s.eps_soft) @ rho), "sn-meanfield")


def bohmian_potential(s: SNState, X: float | None = None) -> PotentialField:
    """V(x) = -G m^2 / sqrt((x - X)^2 + eps^2)."""
    X = s.X if X is None else X
    x = s.psi.grid.x
    return PotentialField(-s.G * s.m**2 / np.sqrt((x - X) ** 2 + s.eps_soft**2), "sn-bohmian")


def sn_meanfield_step(s: SNState, dt: float) -> SNState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    V = meanfield_potential(s)
    psi = CrankNicolson1D(s.psi.grid, s.m).step_array(s.psi.psi, V.values, dt)
    return SNState(WaveFunction1D(s.psi.grid, psi, s.t + dt), s.X, s.t + dt, s.G, s.m, s.eps_soft, s.flags)


def sn_bohmian_step(s: SNState, dt: float, policy: NodePolicy = DEFAULT_POLICY) -> SNState:
    """Potential frozen at the predicted midpoint X(t + dt/2); X then advanced by RK4."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = s.psi.grid
    here = Frames([WaveFunction1D(g, s.psi.psi, s.t)], s.m)
    v0, _ = here.velocity(np.array([[s.X]]), s.t, policy)
    X_mid = s.X + 0.5 * dt * float(v0[0, 0])
    V = bohmian_potential(s, X_mid)
    psi = CrankNicolson1D(g, s.m).step_array(s.psi.psi, V.values, dt)
    new = WaveFunction1D(g, psi, s.t + dt)
    frames = Frames([WaveFunction1D(g, s.psi.psi, s.t), new], s.m)
    _, pos, _, flags = rk4_ensemble(frames, np.array([[s.X]]), s.t, dt, 1, policy)
    return SNState(new, float(pos[-1, 0, 0]), s.t + dt, s.G, s.m, s.eps_soft, s.flags | int(flags[-1, 0]))


def meanfield_energy(s: SNState) -> float:
    """Kinetic energy plus half the self-interaction energy."""
    V = meanfield_potential(s)
    kin = expectation_energy(s.psi, None, s.m)
    pot = float(np.dot(s.psi.grid.weights(), s.psi.density * V.values))
    return kin + 0.5 * pot


def local_minima(V: PotentialField, grid: Grid1D) -> np.ndarray:
    """Positions of strict interior local minima of a potential."""
    idx = argrelmin(V.values)[0]
    return grid.x[idx]


def run_sn(s: SNState, dt: float, nsteps: int, bohmian: bool, policy: NodePolicy = DEFAULT_POLICY):
    rows = [(s.t, np.nan if s.X is None else s.X, s.psi.norm2())]
    for _ in range(nsteps):
        s = sn_bohmian_step(s, dt, policy) if bohmian else sn_meanfield_step(s, dt)
        rows.append((s.t, np.nan if s.X is None else s.X, s.psi.norm2()))
    arr = np.array(rows)
    return s, {"t": arr[:, 0], "X": arr[:, 1], "norm": arr[:, 2]}
