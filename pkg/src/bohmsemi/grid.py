"""Uniform grids, sampled wave functions and potentials."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroNorm

ZERO_NORM = 1e-300


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"grid needs n >= 8 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("grid needs x_max > x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights."""
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.x_min) & (x <= self.x_max)

    @classmethod
    def centered(cls, half_width: float, n: int) -> "Grid1D":
        return cls(-half_width, half_width, n)


@dataclass(frozen=True)
class Grid2D:
    axis1: Grid1D
    axis2: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.n, self.axis2.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis1.x, self.axis2.x, indexing="ij")

    def weights(self) -> np.ndarray:
        return np.outer(self.axis1.weights(), self.axis2.weights())


@dataclass
class WaveFunction1D:
    grid: Grid1D
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (self.grid.n,):
            raise ValueError(f"psi has shape {self.psi.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi contains non-finite amplitudes")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm2(self) -> float:
        return float(np.dot(self.grid.weights(), self.density))

    def copy(self) -> "WaveFunction1D":
        return WaveFunction1D(self.grid, self.psi.copy(), self.t)

    @classmethod
    def from_function(cls, grid: Grid1D, f, t: float = 0.0) -> "WaveFunction1D":
        return cls(grid, f(grid.x), t)


@dataclass
class WaveFunction2D:
    """psi[i, j] = psi(axis1.x[i], axis2.x[j]) (row-major, axis1 slow)."""

    grid: Grid2D
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != self.grid.shape:
            raise ValueError(f"psi has shape {self.psi.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi contains non-finite amplitudes")

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm2(self) -> float:
        return float(np.sum(self.grid.weights() * self.density))

    def copy(self) -> "WaveFunction2D":
        return WaveFunction2D(self.grid, self.psi.copy(), self.t)

    @classmethod
    def from_function(cls, grid: Grid2D, f, t: float = 0.0) -> "WaveFunction2D":
        x1, x2 = grid.mesh()
        return cls(grid, f(x1, x2), t)


@dataclass
class PotentialField:
    values: np.ndarray
    label: str = ""
    valid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.valid is None and not np.all(np.isfinite(self.values)):
            raise ValueError(f"potential {self.label!r} has non-finite values")

    @classmethod
    def zeros(cls, grid, label="free") -> "PotentialField":
        shape = grid.shape if isinstance(grid, Grid2D) else (grid.n,)
        return cls(np.zeros(shape), label)

    def check(self, grid):
        shape = grid.shape if isinstance(grid, Grid2D) else (grid.n,)
        if self.values.shape != shape:
            raise ValueError(f"potential {self.label!r} has shape {self.values.shape}, grid is {shape}")


def normalize(wf):
    """Return a copy of ``wf`` scaled to unit trapezoidal L2 norm."""
    n2 = wf.norm2()
    if not n2 > ZERO_NORM:
        raise ZeroNorm(f"cannot normalize: integral of |psi|^2 = {n2:g}")
    out = wf.copy()
    out.psi /= np.sqrt(n2)
    return out


def gaussian_packet(x, center=0.0, sigma=1.0, k=0.0):
    """Normalized Gaussian with |psi|^2 of standard deviation ``sigma``."""
    x = np.asarray(x, dtype=float)
    return ((2 * np.pi * sigma**2) ** -0.25
            * np.exp(-((x - center) ** 2) / (4 * sigma**2) + 1j * k * (x - center)))


def free_gaussian(x, t, m=1.0, center=0.0, sigma=1.0, k=0.0):
    """Closed-form free evolution of :func:`gaussian_packet` (hbar = 1)."""
    x = np.asarray(x, dtype=float)
    s = sigma * (1 + 1j * t / (2 * m * sigma**2))
    y = x - center - k * t / m
    return ((2 * np.pi * s**2) ** -0.25
            * np.exp(-y**2 / (4 * s * sigma) + 1j * k * (x - center) - 1j * k**2 * t / (2 * m)))


def free_width(t, m=1.0, sigma=1.0):
    return sigma * np.sqrt(1 + t**2 / (4 * m**2 * sigma**4))
