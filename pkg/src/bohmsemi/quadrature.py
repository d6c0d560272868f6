"""Expectation values, density sampling and Kolmogorov-Smirnov distances."""
from __future__ import annotations

import numpy as np

from .errors import ZeroNorm
from .grid import ZERO_NORM, Grid1D, PotentialField, WaveFunction1D


def second_difference(psi: np.ndarray, dx: float) -> np.ndarray:
    """Central second difference with zero values beyond the ends."""
    padded = np.concatenate(([0.0], psi, [0.0]))
    return (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / dx**2


def expectation_energy(wf: WaveFunction1D, V: PotentialField | None, m: float = 1.0) -> float:
    """<psi| -d^2/2m + V |psi> by trapezoidal quadrature."""
    w = wf.grid.weights()
    kin = -0.5 / m * np.dot(w, np.conj(wf.psi) * second_difference(wf.psi, wf.grid.dx))
    pot = 0.0 if V is None else np.dot(w, wf.density * V.values)
    return float(np.real(kin) + pot)


def expectation_force(wf: WaveFunction1D, gradV_at, X2: float) -> float:
    """Mean-field force on the classical particle: int |chi|^2 (-d2 V)(x1, X2) dx1.

    ``gradV_at(x1, X2)`` returns the partial derivative of V with respect to
    the classical coordinate.
    """
    w = wf.grid.weights()
    dV = np.broadcast_to(np.asarray(gradV_at(wf.grid.x, X2), dtype=float), wf.grid.x.shape)
    return float(-np.dot(w, wf.density * dV))


def mean_position(wf: WaveFunction1D) -> float:
    return float(np.dot(wf.grid.weights(), wf.density * wf.grid.x) / wf.norm2())


def linear_cdf(grid: Grid1D, density: np.ndarray) -> np.ndarray:
    """Cumulative of the piecewise-linear density, normalized to end at 1."""
    cells = 0.5 * (density[1:] + density[:-1]) * grid.dx
    total = cells.sum()
    if not total > ZERO_NORM:
        raise ZeroNorm("density integrates to zero")
    cdf = np.concatenate(([0.0], np.cumsum(cells)))
    return cdf / total


def cdf_at(grid: Grid1D, density: np.ndarray, x) -> np.ndarray:
    """Evaluate the piecewise-linear-density CDF at arbitrary points.

    Inside a cell the density is linear, so the CDF is quadratic there.
    """
    x = np.asarray(x, dtype=float)
    cells = 0.5 * (density[1:] + density[:-1]) * grid.dx
    total = cells.sum()
    if not total > ZERO_NORM:
        raise ZeroNorm("density integrates to zero")
    cum = np.concatenate(([0.0], np.cumsum(cells)))
    u = np.clip((x - grid.x_min) / grid.dx, 0.0, grid.n - 1)
    i = np.minimum(u.astype(int), grid.n - 2)
    f = (u - i) * grid.dx
    r0 = density[i]
    slope = (density[i + 1] - density[i]) / grid.dx
    return (cum[i] + r0 * f + 0.5 * slope * f**2) / total


def sample_density(wf: WaveFunction1D, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` i.i.d. positions from |psi|^2 by inverse CDF.

    The density is interpolated linearly between grid points; the quadratic
    CDF inside each cell is inverted exactly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    return sample_from_grid(wf.grid, wf.density, count, np.random.default_rng(seed))


def sample_from_grid(grid: Grid1D, density: np.ndarray, count: int, rng) -> np.ndarray:
    cells = 0.5 * (density[1:] + density[:-1]) * grid.dx
    total = cells.sum()
    if not total > ZERO_NORM:
        raise ZeroNorm("cannot sample from a density with zero mass")
    cum = np.concatenate(([0.0], np.cumsum(cells))) / total
    u = rng.random(count)
    i = np.searchsorted(cum, u, side="right") - 1
    i = np.clip(i, 0, grid.n - 2)
    target = (u - cum[i]) * total
    r0 = density[i]
    slope = (density[i + 1] - density[i]) / grid.dx
    # root of r0 f + slope f^2 / 2 = target in the cancellation-free form
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 2 * target / (r0 + np.sqrt(np.maximum(r0**2 + 2 * slope * target, 0.0)))
    f = np.where(np.isfinite(f), f, 0.0)
    f = np.clip(f, 0.0, grid.dx)
    return grid.x[i] + f


def ks_distance(samples, grid: Grid1D, density: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between samples and a grid density."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    F = cdf_at(grid, density, xs)
    hi = np.arange(1, n + 1) / n - F
    lo = F - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))
