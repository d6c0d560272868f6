"""Mean-field and Bohmian semi-classical schemes for two particles.

Particle 1 is quantum (wave function chi on a 1D grid); particle 2 is
treated classically (X2, P2). The full two-particle Bohmian system on a 2D
grid serves as the reference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bohmian import (DEFAULT_POLICY, Frames, NodePolicy, grid_gradient,
                      rk4_ensemble, velocity_at, _stencil)
from .errors import ZeroNorm
from .grid import ZERO_NORM, Grid2D, PotentialField, WaveFunction1D, WaveFunction2D
from .propagate import CrankNicolson1D, CrankNicolson2D
from .quadrature import expectation_energy, expectation_force, second_difference


@dataclass(frozen=True)
class Coupling:
    """Interaction V(x1, x2) with its derivative along the classical coordinate."""

    V: Callable
    dV2: Callable
    label: str = ""

    def on_axis(self, x1, X2):
        return PotentialField(np.broadcast_to(self.V(x1, X2), np.shape(x1)).astype(float), self.label)

    def on_grid(self, grid: Grid2D):
        x1, x2 = grid.mesh()
        return PotentialField(self.V(x1, x2), self.label)


def bilinear(lam: float) -> Coupling:
    """V = lam x1 x2."""
    return Coupling(lambda a, b: lam * a * b, lambda a, b: lam * a + 0.0 * b, f"bilinear({lam})")


def harmonic(k: float, omega1: float = 0.0, m1: float = 1.0) -> Coupling:
    """V = k (x1 - x2)^2 / 2 + m1 omega1^2 x1^2 / 2."""
    return Coupling(lambda a, b: 0.5 * k * (a - b) ** 2 + 0.5 * m1 * omega1**2 * a**2,
                    lambda a, b: -k * (a - b),
                    f"harmonic({k}, {omega1})")


def uncoupled(V1: Callable | None = None) -> Coupling:
    V1 = V1 or (lambda a: 0.0 * a)
    return Coupling(lambda a, b: V1(a) + 0.0 * b, lambda a, b: 0.0 * a + 0.0 * b, "uncoupled")


@dataclass
class MeanFieldState:
    chi: WaveFunction1D
    X2: float
    P2: float
    t: float = 0.0


@dataclass
class BohmianSCState:
    chi: WaveFunction1D
    X1: float
    X2: float
    P2: float
    t: float = 0.0
    flags: int = 0


@dataclass
class FullQuantumState:
    psi: WaveFunction2D
    X1: float
    X2: float
    t: float = 0.0
    flags: int = 0


def _verlet_wave_step(chi, X2, P2, force, V, m1, m2, dt):
    """Half kick, half drift, wave step at the midpoint, half drift, half kick.

    ``force(chi, X2)`` returns the force on the classical particle. Returns
    (chi_new, X2_new, P2_new, X2_mid).
    """
    P2 = P2 + 0.5 * dt * force(chi, X2)
    X2_mid = X2 + 0.5 * dt * P2 / m2
    prop = CrankNicolson1D(chi.grid, m1)
    psi = prop.step_array(chi.psi, V.on_axis(chi.grid.x, X2_mid).values, dt)
    chi_new = WaveFunction1D(chi.grid, psi, chi.t + dt)
    X2 = X2_mid + 0.5 * dt * P2 / m2
    return chi_new, X2, P2, X2_mid


def meanfield_step(s: MeanFieldState, V: Coupling, m1: float, m2: float, dt: float) -> MeanFieldState:
    if dt <= 0:
        raise ValueError("dt must be positive")

    def force(chi, X2):
        return expectation_force(chi, V.dV2, X2)

    chi, X2, P2, _ = _verlet_wave_step(s.chi, s.X2, s.P2, force, V, m1, m2, dt)
    P2 = P2 + 0.5 * dt * force(chi, X2)
    return MeanFieldState(chi, X2, P2, s.t + dt)


def bohmian_sc_step(s: BohmianSCState, V: Coupling, m1: float, m2: float, dt: float,
                    policy: NodePolicy = DEFAULT_POLICY) -> BohmianSCState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    P2 = s.P2 - 0.5 * dt * float(V.dV2(s.X1, s.X2))
    X2_mid = s.X2 + 0.5 * dt * P2 / m2
    prop = CrankNicolson1D(s.chi.grid, m1)
    psi = prop.step_array(s.chi.psi, V.on_axis(s.chi.grid.x, X2_mid).values, dt)
    chi_new = WaveFunction1D(s.chi.grid, psi, s.t + dt)
    frames = Frames([WaveFunction1D(s.chi.grid, s.chi.psi, s.t), chi_new], m1)
    _, pos, _, flags = rk4_ensemble(frames, np.array([[s.X1]]), s.t, dt, 1, policy)
    X1 = float(pos[-1, 0, 0])
    X2 = X2_mid + 0.5 * dt * P2 / m2
    P2 = P2 - 0.5 * dt * float(V.dV2(X1, X2))
    return BohmianSCState(chi_new, X1, X2, P2, s.t + dt, s.flags | int(flags[-1, 0]))


def full_step(s: FullQuantumState, V: Coupling | PotentialField, m1: float, m2: float, dt: float,
              policy: NodePolicy = DEFAULT_POLICY, prop: CrankNicolson2D | None = None) -> FullQuantumState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = s.psi.grid
    Vg = V.on_grid(grid) if isinstance(V, Coupling) else V
    prop = prop or CrankNicolson2D(grid, m1, m2)
    new = WaveFunction2D(grid, prop.step_array(s.psi.psi, Vg.values, dt), s.t + dt)
    frames = Frames([WaveFunction2D(grid, s.psi.psi, s.t), new], (m1, m2))
    _, pos, _, flags = rk4_ensemble(frames, np.array([[s.X1, s.X2]]), s.t, dt, 1, policy)
    return FullQuantumState(new, float(pos[-1, 0, 0]), float(pos[-1, 0, 1]), s.t + dt,
                            s.flags | int(flags[-1, 0]))


# ---------------------------------------------------------------------------
# conditional wave function and the interaction term

def _slice_axis2(grid: Grid2D, values, X2):
    """Cubic interpolation of values[:, j] along axis 2 at X2."""
    j, w = _stencil(grid.axis2, X2)
    return sum(w[b] * values[:, j + b - 1] for b in range(4))


def conditional_wavefunction(psi: WaveFunction2D, X2: float) -> tuple[WaveFunction1D, float]:
    """chi(x1) = psi(x1, X2), normalized; also returns the slice's L2 norm."""
    ax2 = psi.grid.axis2
    if not ax2.contains(X2):
        raise ValueError(f"X2={X2} outside axis 2 range")
    raw = _slice_axis2(psi.grid, psi.psi, X2)
    chi = WaveFunction1D(psi.grid.axis1, raw, psi.t)
    n2 = chi.norm2()
    if not n2 > ZERO_NORM:
        raise ZeroNorm(f"conditional wave function vanishes at X2={X2}")
    chi.psi = chi.psi / np.sqrt(n2)
    return chi, float(np.sqrt(n2))


def interaction_term(psi: WaveFunction2D, X1: float, X2: float, m2: float,
                     policy: NodePolicy = DEFAULT_POLICY, m1: float = 1.0,
                     coupling: Coupling | None = None):
    """The term separating the exact conditional dynamics from a plain conditional Schroedinger step.

    Returns (I(x1) on axis 1, ||I|| / ||H_eff chi||) where H_eff is
    -d1^2/2m1 + V(x1, X2) acting on the unnormalized slice chi = psi(., X2).
    """
    g = psi.grid
    d2 = grid_gradient(psi.psi, g.axis2.dx, 1)
    dd2 = np.gradient(d2, g.axis2.dx, axis=1, edge_order=2)
    chi = _slice_axis2(g, psi.psi, X2)
    d2_at = _slice_axis2(g, d2, X2)
    dd2_at = _slice_axis2(g, dd2, X2)
    v2 = float(velocity_at(psi, np.array([X1, X2]), (m1, m2), policy)[1])
    I = -dd2_at / (2 * m2) + 1j * d2_at * v2
    heff = -second_difference(chi, g.axis1.dx) / (2 * m1)
    if coupling is not None:
        heff = heff + coupling.V(g.axis1.x, X2) * chi
    w = g.axis1.weights()
    nI = np.sqrt(np.dot(w, np.abs(I) ** 2))
    nH = np.sqrt(np.dot(w, np.abs(heff) ** 2))
    return I, float(nI / nH) if nH > 0 else np.inf


# ---------------------------------------------------------------------------
# scenario runners

def _record(rows, keys):
    return {k: np.array([r[i] for r in rows]) for i, k in enumerate(keys)}


def run_meanfield(s: MeanFieldState, V: Coupling, m1, m2, dt, nsteps):
    rows = [(s.t, s.X2, s.P2, s.chi.norm2())]
    for _ in range(nsteps):
        s = meanfield_step(s, V, m1, m2, dt)
        rows.append((s.t, s.X2, s.P2, s.chi.norm2()))
    return s, _record(rows, ("t", "X2", "P2", "norm"))


def run_bohmian_sc(s: BohmianSCState, V: Coupling, m1, m2, dt, nsteps, policy=DEFAULT_POLICY):
    rows = [(s.t, s.X1, s.X2, s.P2, s.chi.norm2())]
    for _ in range(nsteps):
        s = bohmian_sc_step(s, V, m1, m2, dt, policy)
        rows.append((s.t, s.X1, s.X2, s.P2, s.chi.norm2()))
    return s, _record(rows, ("t", "X1", "X2", "P2", "norm"))


def run_full(s: FullQuantumState, V: Coupling, m1, m2, dt, nsteps, policy=DEFAULT_POLICY):
    prop = CrankNicolson2D(s.psi.grid, m1, m2)
    Vg = V.on_grid(s.psi.grid)
    rows = [(s.t, s.X1, s.X2, s.psi.norm2())]
    for _ in range(nsteps):
        s = full_step(s, Vg, m1, m2, dt, policy, prop)
        rows.append((s.t, s.X1, s.X2, s.psi.norm2()))
    return s, _record(rows, ("t", "X1", "X2", "norm"))


def meanfield_energy(s: MeanFieldState, V: Coupling, m1, m2) -> float:
    return expectation_energy(s.chi, V.on_axis(s.chi.grid.x, s.X2), m1) + s.P2**2 / (2 * m2)


@dataclass
class SchemeComparison:
    full: dict
    meanfield: dict
    bohmian: dict
    err_meanfield: float
    err_bohmian: float
    ratio_initial: float
    ratio_final: float


def compare_two_particle(psi0: WaveFunction2D, X1: float, X2: float, V: Coupling, m1, m2, dt, nsteps,
                         policy: NodePolicy = DEFAULT_POLICY) -> SchemeComparison:
    """Run all three schemes from matched initial data and score them against the full run.

    chi(t0) is the normalized conditional wave function of psi0 at X2; P2(t0)
    is m2 times the Bohmian velocity of particle 2 in the full state.
    """
    chi0, _ = conditional_wavefunction(psi0, X2)
    v0 = velocity_at(psi0, np.array([X1, X2]), (m1, m2), policy)
    P2 = float(m2 * v0[1])
    _, ratio0 = interaction_term(psi0, X1, X2, m2, policy, m1, V)
    sf, full = run_full(FullQuantumState(psi0, X1, X2, psi0.t), V, m1, m2, dt, nsteps, policy)
    _, mf = run_meanfield(MeanFieldState(chi0, X2, P2, psi0.t), V, m1, m2, dt, nsteps)
    _, bsc = run_bohmian_sc(BohmianSCState(chi0.copy(), X1, X2, P2, psi0.t), V, m1, m2, dt, nsteps, policy)
    _, ratio1 = interaction_term(sf.psi, sf.X1, sf.X2, m2, policy, m1, V)

    def rms(a):
        return float(np.sqrt(np.mean((a["X2"] - full["X2"]) ** 2)))

    return SchemeComparison(full, mf, bsc, rms(mf), rms(bsc), ratio0, ratio1)


def splitting_state(grid: Grid2D, k: float = 2.0, sigma1: float = 1.0, sigma2: float = 0.5,
                    x2_center: float = 0.0) -> WaveFunction2D:
    """Product state: particle 1 in a +/-k superposition that splits, particle 2 a resting packet."""
    from .grid import gaussian_packet, normalize

    x1, x2 = grid.mesh()
    f = (gaussian_packet(x1, 0.0, sigma1, k) + gaussian_packet(x1, 0.0, sigma1, -k))
    g = gaussian_packet(x2, x2_center, sigma2)
    return normalize(WaveFunction2D(grid, f * g))


