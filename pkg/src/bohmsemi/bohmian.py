"""Guidance velocities, quantum potential and trajectory integration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FrameGap, OutOfDomain
from .grid import Grid1D, Grid2D, PotentialField, WaveFunction1D, WaveFunction2D, normalize
from .propagate import CrankNicolson1D
from .quadrature import ks_distance, sample_density

# per-step event flags (bit mask)
NODE = 1            # velocity clamped near a node of psi
CLAMPED = 2         # position pushed back inside the domain
FORBIDDEN = 4       # alpha'^2 < 0 in the mini-superspace Bohmian SC scheme
STEP_FLOOR = 8      # adaptive refinement hit its minimum step


@dataclass(frozen=True)
class NodePolicy:
    eps_node: float = 1e-12     # fraction of peak density
    v_max: float = 1e3

    def __post_init__(self):
        if not (self.eps_node > 0 and self.v_max > 0):
            raise ValueError("NodePolicy needs eps_node > 0 and v_max > 0")


DEFAULT_POLICY = NodePolicy()


@dataclass
class ParticleState:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(self.x)):
            raise ValueError("particle coordinates must be finite")


@dataclass
class TrajectoryRecord:
    """Time series of one trajectory. positions/velocities have shape (nt, dim)."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    flags: np.ndarray
    columns: tuple[str, ...] = ("x",)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float).reshape(len(self.times), -1)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(len(self.times), -1)
        self.flags = np.asarray(self.flags, dtype=np.int64).reshape(len(self.times))
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def flag_counts(self) -> dict[str, int]:
        names = {"node": NODE, "clamped": CLAMPED, "forbidden": FORBIDDEN, "step_floor": STEP_FLOOR}
        return {k: int(np.count_nonzero(self.flags & b)) for k, b in names.items()}


# ---------------------------------------------------------------------------
# interpolation

def _cubic_weights(u):
    """Lagrange weights for nodes -1, 0, 1, 2 at fractional offset u in [0, 1]."""
    return np.stack([
        -u * (u - 1) * (u - 2) / 6,
        (u + 1) * (u - 1) * (u - 2) / 2,
        -(u + 1) * u * (u - 2) / 2,
        (u + 1) * u * (u - 1) / 6,
    ])


def _stencil(grid: Grid1D, x):
    s = (np.asarray(x, dtype=float) - grid.x_min) / grid.dx
    i = np.clip(np.floor(s).astype(int), 1, grid.n - 3)
    return i, _cubic_weights(s - i)


def interp_cubic_1d(grid: Grid1D, values, x):
    """Four-point cubic Lagrange interpolation on a uniform grid."""
    i, w = _stencil(grid, x)
    out = 0.0
    for k in range(4):
        out = out + w[k] * values[i + k - 1]
    return out


def interp_cubic_2d(grid: Grid2D, values, x1, x2):
    """Tensor-product cubic interpolation of a (n1, n2) array."""
    i, wi = _stencil(grid.axis1, x1)
    j, wj = _stencil(grid.axis2, x2)
    out = 0.0
    for a in range(4):
        row = 0.0
        for b in range(4):
            row = row + wj[b] * values[i + a - 1, j + b - 1]
        out = out + wi[a] * row
    return out


def _check_domain(grid: Grid1D, x):
    x = np.asarray(x)
    if not np.all(grid.contains(x)):
        raise OutOfDomain(f"point(s) outside [{grid.x_min}, {grid.x_max}]")


# ---------------------------------------------------------------------------
# velocity fields

def _guide(psi, dpsi, m, peak, policy):
    """Im(dpsi/psi)/m with the node clamp; returns (v, flagged)."""
    dens = np.abs(psi) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.imag(dpsi * np.conj(psi)) / (m * dens)
    node = dens < policy.eps_node * peak
    v = np.where(np.isfinite(v), v, 0.0)
    v = np.where(node, np.clip(v, -policy.v_max, policy.v_max), v)
    return v, node


def grid_gradient(psi, dx, axis=0):
    return np.gradient(psi, dx, axis=axis, edge_order=2)


def velocity_at(wf, x, m=1.0, policy: NodePolicy = DEFAULT_POLICY, return_flags=False):
    """Bohmian velocity Im(grad psi / psi)/m at arbitrary point(s).

    1D: ``x`` is a scalar or array of positions. 2D: ``x`` has shape
    (..., 2) and ``m`` is (m1, m2); the result has the same shape as ``x``.
    """
    if isinstance(wf, WaveFunction2D):
        x = np.asarray(x, dtype=float)
        _check_domain(wf.grid.axis1, x[..., 0])
        _check_domain(wf.grid.axis2, x[..., 1])
        v, node = _velocity_2d(wf.grid, wf.psi, _grad2(wf), x[..., 0], x[..., 1], m, policy,
                               float(wf.density.max()))
    else:
        _check_domain(wf.grid, x)
        dpsi = grid_gradient(wf.psi, wf.grid.dx)
        psi_x = interp_cubic_1d(wf.grid, wf.psi, x)
        dpsi_x = interp_cubic_1d(wf.grid, dpsi, x)
        v, node = _guide(psi_x, dpsi_x, m, float(wf.density.max()), policy)
    return (v, node) if return_flags else v


def _grad2(wf: WaveFunction2D):
    return (grid_gradient(wf.psi, wf.grid.axis1.dx, 0), grid_gradient(wf.psi, wf.grid.axis2.dx, 1))


def _velocity_2d(grid, psi, grads, x1, x2, m, policy, peak):
    m1, m2 = m
    p = interp_cubic_2d(grid, psi, x1, x2)
    d1 = interp_cubic_2d(grid, grads[0], x1, x2)
    d2 = interp_cubic_2d(grid, grads[1], x1, x2)
    v1, n1 = _guide(p, d1, m1, peak, policy)
    v2, _ = _guide(p, d2, m2, peak, policy)
    return np.stack([v1, v2], axis=-1), n1


def velocity_on_grid(wf: WaveFunction1D, m=1.0) -> np.ndarray:
    dpsi = grid_gradient(wf.psi, wf.grid.dx)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.imag(dpsi / wf.psi) / m
    return np.where(np.isfinite(v), v, 0.0)


def probability_current(wf: WaveFunction1D, m=1.0) -> np.ndarray:
    dpsi = grid_gradient(wf.psi, wf.grid.dx)
    return np.imag(np.conj(wf.psi) * dpsi) / m


def quantum_potential(wf: WaveFunction1D, m=1.0, policy: NodePolicy = DEFAULT_POLICY) -> PotentialField:
    """Q = -(1/2m) |psi|''/|psi| on the grid.

    Evaluated as -(1/2m)[(ln R)'' + ((ln R)')^2] with central differences of
    ln R, which is exact for Gaussian amplitudes. End points and cells with
    density below ``eps_node`` times the peak are marked invalid (NaN).
    """
    dens = wf.density
    valid = dens >= policy.eps_node * dens.max()
    valid[0] = valid[-1] = False
    dx = wf.grid.dx
    Q = np.full(wf.grid.n, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        lnR = 0.5 * np.log(dens)
        d1 = (lnR[2:] - lnR[:-2]) / (2 * dx)
        d2 = (lnR[2:] - 2 * lnR[1:-1] + lnR[:-2]) / dx**2
        Q[1:-1] = -0.5 / m * (d2 + d1**2)
    valid[1:-1] &= valid[2:] & valid[:-2]
    valid &= np.isfinite(Q)
    Q[~valid] = np.nan
    return PotentialField(Q, "quantum", valid=valid)


# ---------------------------------------------------------------------------
# wave-function histories

class Frames:
    """Time-ordered snapshots of a sampled wave function.

    Between snapshots psi (and its gradient) is interpolated linearly in time.
    """

    def __init__(self, snapshots, masses=1.0):
        snapshots = list(snapshots)
        if len(snapshots) < 1:
            raise FrameGap("no frames")
        self.grid = snapshots[0].grid
        self.times = np.array([s.t for s in snapshots], dtype=float)
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("frames must be strictly time-ordered")
        self.psi = [s.psi for s in snapshots]
        self.two_d = isinstance(self.grid, Grid2D)
        self.masses = masses
        if self.two_d:
            self._grad = [(grid_gradient(p, self.grid.axis1.dx, 0), grid_gradient(p, self.grid.axis2.dx, 1))
                          for p in self.psi]
        else:
            self._grad = [grid_gradient(p, self.grid.dx) for p in self.psi]
        self._peak = [float((np.abs(p) ** 2).max()) for p in self.psi]

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def _locate(self, t):
        t0, t1 = self.span
        tol = 1e-9 * max(1.0, abs(t1))
        if t < t0 - tol or t > t1 + tol:
            raise FrameGap(f"time {t} outside frame span [{t0}, {t1}]")
        if len(self.times) == 1:
            return 0, 0.0
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, float(np.clip(w, 0.0, 1.0))

    def psi_at(self, t):
        k, w = self._locate(t)
        if w == 0.0:
            return self.psi[k]
        return (1 - w) * self.psi[k] + w * self.psi[k + 1]

    def wavefunction_at(self, t):
        cls = WaveFunction2D if self.two_d else WaveFunction1D
        return cls(self.grid, self.psi_at(t), t)

    def contains(self, x):
        if self.two_d:
            return self.grid.axis1.contains(x[..., 0]) & self.grid.axis2.contains(x[..., 1])
        return self.grid.contains(x[..., 0])

    def clamp(self, x):
        if self.two_d:
            lo = np.array([self.grid.axis1.x_min, self.grid.axis2.x_min])
            hi = np.array([self.grid.axis1.x_max, self.grid.axis2.x_max])
        else:
            lo = np.array([self.grid.x_min])
            hi = np.array([self.grid.x_max])
        return np.clip(x, lo, hi)

    def _velocity_frame(self, k, x, policy):
        if self.two_d:
            return _velocity_2d(self.grid, self.psi[k], self._grad[k], x[..., 0], x[..., 1],
                                self.masses, policy, self._peak[k])
        psi = interp_cubic_1d(self.grid, self.psi[k], x[..., 0])
        dpsi = interp_cubic_1d(self.grid, self._grad[k], x[..., 0])
        v, node = _guide(psi, dpsi, self.masses, self._peak[k], policy)
        return v[..., None], node

    def velocity(self, x, t, policy=DEFAULT_POLICY):
        """Velocity at points ``x`` (shape (N, dim)) and time ``t``."""
        k, w = self._locate(t)
        if w == 0.0 or len(self.times) == 1:
            return self._velocity_frame(k, x, policy)
        if w == 1.0:
            return self._velocity_frame(k + 1, x, policy)
        # blend psi and grad psi at the points, then form the ratio
        if self.two_d:
            g = self.grid
            args = (x[..., 0], x[..., 1])
            p = (1 - w) * interp_cubic_2d(g, self.psi[k], *args) + w * interp_cubic_2d(g, self.psi[k + 1], *args)
            peak = (1 - w) * self._peak[k] + w * self._peak[k + 1]
            vs = []
            node = None
            for ax in range(2):
                d = ((1 - w) * interp_cubic_2d(g, self._grad[k][ax], *args)
                     + w * interp_cubic_2d(g, self._grad[k + 1][ax], *args))
                v, nd = _guide(p, d, self.masses[ax], peak, policy)
                vs.append(v)
                node = nd if node is None else node
            return np.stack(vs, axis=-1), node
        xs = x[..., 0]
        p = (1 - w) * interp_cubic_1d(self.grid, self.psi[k], xs) + w * interp_cubic_1d(self.grid, self.psi[k + 1], xs)
        d = (1 - w) * interp_cubic_1d(self.grid, self._grad[k], xs) + w * interp_cubic_1d(self.grid, self._grad[k + 1], xs)
        peak = (1 - w) * self._peak[k] + w * self._peak[k + 1]
        v, node = _guide(p, d, self.masses, peak, policy)
        return v[..., None], node


class AnalyticState1D:
    """Wave function given in closed form: psi(x, t) and its x-derivative."""

    def __init__(self, psi, dpsi, m=1.0, domain=(-np.inf, np.inf), peak=1.0):
        self._psi = psi
        self._dpsi = dpsi
        self.masses = m
        self.domain = domain
        self.peak = peak

    def contains(self, x):
        return (x[..., 0] >= self.domain[0]) & (x[..., 0] <= self.domain[1])

    def clamp(self, x):
        return np.clip(x, self.domain[0], self.domain[1])

    def velocity(self, x, t, policy=DEFAULT_POLICY):
        xs = x[..., 0]
        v, node = _guide(self._psi(xs, t), self._dpsi(xs, t), self.masses, self.peak, policy)
        return v[..., None], node


# ---------------------------------------------------------------------------
# integration

def rk4_ensemble(field, X0, t0, dt, nsteps, policy=DEFAULT_POLICY):
    """Fixed-step RK4 of dX/dt = v(X, t) for an ensemble.

    ``X0`` has shape (N, dim). Returns times (nsteps+1,), positions and
    velocities (nsteps+1, N, dim) and flags (nsteps+1, N).
    """
    X = np.array(X0, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    N, dim = X.shape
    times = t0 + dt * np.arange(nsteps + 1)
    pos = np.empty((nsteps + 1, N, dim))
    vel = np.empty((nsteps + 1, N, dim))
    flags = np.zeros((nsteps + 1, N), dtype=np.int64)
    v, node = field.velocity(X, times[0], policy)
    pos[0], vel[0] = X, v
    flags[0] |= np.where(node, NODE, 0)
    for s in range(nsteps):
        t = times[s]
        k1 = v
        k2, n2 = field.velocity(field.clamp(X + 0.5 * dt * k1), t + 0.5 * dt, policy)
        k3, n3 = field.velocity(field.clamp(X + 0.5 * dt * k2), t + 0.5 * dt, policy)
        k4, n4 = field.velocity(field.clamp(X + dt * k3), times[s + 1], policy)
        Xn = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        f = np.where(n2 | n3 | n4, NODE, 0)
        inside = field.contains(Xn)
        Xn = np.where(inside[:, None], Xn, field.clamp(Xn))
        f |= np.where(inside, 0, CLAMPED)
        X = Xn
        v, node = field.velocity(X, times[s + 1], policy)
        f |= np.where(node, NODE, 0)
        pos[s + 1], vel[s + 1] = X, v
        flags[s + 1] |= f
    return times, pos, vel, flags


def _steps_for(span, dt):
    n = (span[1] - span[0]) / dt
    nsteps = int(round(n))
    if nsteps < 1 or abs(n - nsteps) > 1e-6 * max(1.0, n):
        raise ValueError(f"dt={dt} does not divide the span {span}")
    return nsteps


def advance_trajectory(frames, x0, dt, policy: NodePolicy = DEFAULT_POLICY, t_span=None) -> TrajectoryRecord:
    """Integrate one Bohmian trajectory through stored frames or an analytic state."""
    x0 = x0 if isinstance(x0, ParticleState) else ParticleState(x0)
    if t_span is None:
        if not isinstance(frames, Frames):
            raise ValueError("analytic states need an explicit t_span")
        t_span = (x0.t, frames.span[1])
    if isinstance(frames, Frames):
        f0, f1 = frames.span
        tol = 1e-9 * max(1.0, abs(f1))
        if t_span[0] < f0 - tol or t_span[1] > f1 + tol:
            raise FrameGap(f"requested span {t_span} not covered by frames {frames.span}")
        if len(frames.times) > 1:
            ratio = (frames.times[1] - frames.times[0]) / dt
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError("dt must divide the frame spacing")
    nsteps = _steps_for(t_span, dt)
    times, pos, vel, flags = rk4_ensemble(frames, x0.x[None, :], t_span[0], dt, nsteps, policy)
    cols = ("x1", "x2") if pos.shape[-1] == 2 else ("x",)
    return TrajectoryRecord(times, pos[:, 0], vel[:, 0], flags[:, 0], cols)


def propagate_frames(wf0: WaveFunction1D, V: PotentialField, m, dt, nsteps, stride=1):
    """Run Crank-Nicolson and keep every ``stride``-th snapshot (including t0)."""
    prop = CrankNicolson1D(wf0.grid, m)
    snaps = [wf0]
    psi, t = wf0.psi, wf0.t
    for s in range(1, nsteps + 1):
        psi = prop.step_array(psi, V.values, dt)
        t = wf0.t + s * dt
        if s % stride == 0:
            snaps.append(WaveFunction1D(wf0.grid, psi, t))
    return Frames(snaps, m)


def equivariance_test(wf0: WaveFunction1D, V: PotentialField, m, count, T, seed, dt=None,
                      policy: NodePolicy = DEFAULT_POLICY, return_details=False):
    """KS distance between Bohmian-transported samples and |psi(T)|^2."""
    wf0 = normalize(wf0)
    if dt is None:
        dt = T / 200
    nsteps = _steps_for((0.0, T), dt)
    frames = propagate_frames(wf0, V, m, dt, nsteps)
    x0 = sample_density(wf0, count, seed)
    _, pos, _, flags = rk4_ensemble(frames, x0[:, None], wf0.t, dt, nsteps, policy)
    final = frames.wavefunction_at(frames.span[1])
    ks = ks_distance(pos[-1, :, 0], final.grid, final.density)
    if return_details:
        ks0 = ks_distance(x0, wf0.grid, wf0.density)
        return ks, {"ks_initial": ks0, "positions": pos, "flags": flags, "frames": frames}
    return ks


@dataclass
class NewtonResidual:
    times: np.ndarray
    residual: np.ndarray           # m x'' + d(V + Q)/dx
    classical_force: np.ndarray    # -dV/dx
    quantum_force: np.ndarray      # -dQ/dx
    nonclassical: np.ndarray       # |quantum force| above threshold * |classical force|

    def max_ratio(self):
        scale = np.nanmax(np.abs(self.classical_force))
        return float(np.nanmax(np.abs(self.residual)) / scale) if scale > 0 else np.inf


def newton_residual(traj: TrajectoryRecord, frames: Frames, V: PotentialField, m=1.0,
                    policy: NodePolicy = DEFAULT_POLICY, threshold=0.1) -> NewtonResidual:
    """Check m x'' = -d(V + Q)/dx along a recorded 1D trajectory."""
    grid = frames.grid
    acc = np.gradient(traj.velocities[:, 0], traj.times, edge_order=2)
    dV = grid_gradient(V.values, grid.dx)
    x = traj.positions[:, 0]
    fV = -interp_cubic_1d(grid, dV, x)
    fQ = np.empty_like(x)
    for i, t in enumerate(traj.times):
        Q = quantum_potential(frames.wavefunction_at(t), m, policy).values
        dQ = np.gradient(Q, grid.dx)
        fQ[i] = -interp_cubic_1d(grid, dQ, x[i])
    res = m * acc - fV - fQ
    scale = np.maximum(np.abs(fV), 1e-300)
    return NewtonResidual(traj.times, res, fV, fQ, np.abs(fQ) > threshold * scale)
