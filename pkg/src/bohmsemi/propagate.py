"""Crank-Nicolson propagation of i dpsi/dt = (-lap/2m + V) psi on uniform grids.

Walls are Dirichlet: the two end points of every axis are held at zero and
only interior points are evolved. Each step is a Cayley transform of a
Hermitian tridiagonal matrix, so the discrete norm is conserved up to the
round-off of the banded solve.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import UnstableState
from .grid import Grid1D, PotentialField, WaveFunction1D, WaveFunction2D


def _cayley_banded(diag_h, off_h, a):
    """Banded form of (1 + i a H) and the pieces of (1 - i a H).

    ``diag_h`` has the main diagonal of H (may be 2D: one column per system),
    ``off_h`` the (constant) off-diagonal.
    """
    lhs_diag = 1 + 1j * a * diag_h
    lhs_off = 1j * a * off_h
    rhs_diag = 1 - 1j * a * diag_h
    rhs_off = -1j * a * off_h
    return lhs_diag, lhs_off, rhs_diag, rhs_off


def _apply_tridiag(diag, off, y):
    """(diag + off*shift) @ y along axis 0, zero outside the interior."""
    out = diag * y
    out[1:] += off * y[:-1]
    out[:-1] += off * y[1:]
    return out


def _solve_tridiag_columns(diag, off, rhs):
    """Solve independent tridiagonal systems, one per column of ``rhs``.

    All systems share the constant off-diagonal ``off``; the columns are
    stacked into a single block-diagonal banded system (zero coupling across
    block boundaries) and handed to one LAPACK call.
    """
    n, ncol = rhs.shape
    total = n * ncol
    ab = np.zeros((3, total), dtype=complex)
    ab[1] = diag.T.reshape(total)
    sup = np.full(total, off, dtype=complex)
    sup[::n] = 0.0          # no coupling into the first row of a block
    sub = np.full(total, off, dtype=complex)
    sub[n - 1::n] = 0.0     # no coupling out of the last row of a block
    ab[0] = sup
    ab[2] = sub
    sol = solve_banded((1, 1), ab, rhs.T.reshape(total), check_finite=False)
    return sol.reshape(ncol, n).T


class CrankNicolson1D:
    """Reusable 1D stepper; owns no state between calls except the grid."""

    def __init__(self, grid: Grid1D, m: float = 1.0):
        self.grid = grid
        self.m = float(m)
        self._kin_diag = 1.0 / (self.m * grid.dx**2)
        self._kin_off = -0.5 / (self.m * grid.dx**2)

    def step_array(self, psi: np.ndarray, V: np.ndarray, dt: float) -> np.ndarray:
        inner = psi[1:-1]
        diag_h = self._kin_diag + V[1:-1]
        ld, lo, rd, ro = _cayley_banded(diag_h, self._kin_off, 0.5 * dt)
        rhs = _apply_tridiag(rd, ro, inner.astype(complex))
        ab = np.empty((3, inner.size), dtype=complex)
        ab[0] = lo
        ab[1] = ld
        ab[2] = lo
        out = np.zeros_like(psi, dtype=complex)
        out[1:-1] = solve_banded((1, 1), ab, rhs, check_finite=False)
        if not np.all(np.isfinite(out)):
            raise UnstableState("Crank-Nicolson step produced non-finite amplitudes")
        return out

    def step(self, wf: WaveFunction1D, V: PotentialField, dt: float) -> WaveFunction1D:
        if dt <= 0:
            raise ValueError("dt must be positive")
        V.check(wf.grid)
        return WaveFunction1D(wf.grid, self.step_array(wf.psi, V.values, dt), wf.t + dt)


def cn_step_1d(wf: WaveFunction1D, V: PotentialField, dt: float, m: float = 1.0) -> WaveFunction1D:
    return CrankNicolson1D(wf.grid, m).step(wf, V, dt)


class CrankNicolson2D:
    """ADI stepper for two particles on a tensor grid.

    The Hamiltonian is split as H1 + H2 with Hj = -d_j^2/2m_j + V/2 and the
    step is the symmetric product C1(dt/2) C2(dt) C1(dt/2) of Cayley
    transforms, each a batch of tridiagonal solves along one axis.
    """

    def __init__(self, grid, m1: float = 1.0, m2: float = 1.0):
        self.grid = grid
        self.m = (float(m1), float(m2))

    def _sweep(self, psi, V, dt, axis):
        ax = self.grid.axis1 if axis == 0 else self.grid.axis2
        m = self.m[axis]
        work = psi if axis == 0 else psi.T
        Vw = V if axis == 0 else V.T
        kin_diag = 1.0 / (m * ax.dx**2)
        kin_off = -0.5 / (m * ax.dx**2)
        # interior along the sweep axis; the other axis' walls stay zero
        inner = work[1:-1, 1:-1]
        diag_h = kin_diag + 0.5 * Vw[1:-1, 1:-1]
        ld, lo, rd, ro = _cayley_banded(diag_h, kin_off, 0.5 * dt)
        rhs = _apply_tridiag(rd, ro, inner)
        new = np.zeros_like(work)
        new[1:-1, 1:-1] = _solve_tridiag_columns(ld, lo, rhs)
        return new if axis == 0 else new.T

    def step_array(self, psi, V, dt):
        psi = np.asarray(psi, dtype=complex)
        psi = self._sweep(psi, V, 0.5 * dt, 0)
        psi = self._sweep(psi, V, dt, 1)
        psi = self._sweep(psi, V, 0.5 * dt, 0)
        if not np.all(np.isfinite(psi)):
            raise UnstableState("ADI step produced non-finite amplitudes")
        return psi

    def step(self, wf: WaveFunction2D, V: PotentialField, dt: float) -> WaveFunction2D:
        if dt <= 0:
            raise ValueError("dt must be positive")
        V.check(wf.grid)
        return WaveFunction2D(wf.grid, self.step_array(wf.psi, V.values, dt), wf.t + dt)


def cn_step_2d(wf: WaveFunction2D, V: PotentialField, dt: float, m1: float = 1.0, m2: float = 1.0) -> WaveFunction2D:
    return CrankNicolson2D(wf.grid, m1, m2).step(wf, V, dt)
