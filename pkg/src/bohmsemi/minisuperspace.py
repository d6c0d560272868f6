"""Flat FLRW mini-superspace with a massless scalar field.

Units and gauge: kappa = 1, V_G = V_M = 0, and the time parameter tau with
dtau e^{3 alpha} = dt. The Wheeler-DeWitt equation is then
(d_alpha^2 - d_phi^2) psi = 0 and the guidance equations read
alpha' = -d_alpha S, phi' = d_phi S.

All wave functions here are Gaussians (or sums of two), so every derivative
is available in closed form. Sums are evaluated in log space relative to the
dominant term, which keeps ratios such as psi_phi / psi finite far outside
the packets.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bohmian import FORBIDDEN, NODE, STEP_FLOOR, TrajectoryRecord
from .errors import NodePoint
from .grid import Grid1D, WaveFunction1D
from .quadrature import expectation_energy, ks_distance, sample_from_grid

MODES = ("R", "L", "superposition")
LABELS = ("left->left", "right->right", "right->left", "left->right", "cyclic", "undetermined")


@dataclass(frozen=True)
class MiniModelParams:
    kappa: float = 1.0
    k_curv: float = 0.0
    Lambda: float = 0.0
    V_M: float = 0.0        # constant matter potential

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    def V_G(self, alpha):
        return -0.5 * self.k_curv * np.exp(-2 * np.asarray(alpha)) + self.Lambda / 6

    @property
    def is_default(self):
        return self == MiniModelParams()


@dataclass(frozen=True)
class WDWParams:
    u: float = 1.0
    v: float = 5.0
    sigma: float = 1.0
    mode: str = "superposition"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def regime_warnings(self) -> list[str]:
        """Violations of v > u >> 0 and sigma u >> 1 (taken as a factor 10)."""
        out = []
        if self.mode == "superposition" and not self.v > self.u:
            out.append("expected v > u for the superposition")
        if not self.sigma * self.u >= 10:
            out.append(f"sigma*u = {self.sigma * self.u:g} is not >> 1")
        return out

    def check_regime(self):
        for msg in self.regime_warnings():
            warnings.warn(msg, stacklevel=3)


@dataclass
class MiniState:
    alpha: float
    phi: float
    tau: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.phi) and np.isfinite(self.tau)):
            raise ValueError("MiniState entries must be finite")


@dataclass
class SCMiniState:
    phi: float
    alpha: float
    packet: WDWParams
    alpha_sign: int = 1
    tau: float = 0.0
    tau0: float = 0.0
    alpha0: float | None = None

    def __post_init__(self):
        if self.alpha_sign not in (1, -1):
            raise ValueError("alpha_sign must be +1 or -1")
        if self.alpha0 is None:
            self.alpha0 = self.alpha


# ---------------------------------------------------------------------------
# full Wheeler-DeWitt packets

def _wdw_parts(p: WDWParams, phi, alpha):
    """Per component: (log psi, phi-factor sign, alpha-factor sign, D1, D2, D3).

    For psi_R(z = phi - alpha) and psi_L(w = phi + alpha), every derivative is
    a polynomial in the logarithmic derivative a times psi:
    d psi = a psi, d^2 psi = (a^2 + c) psi, d^3 psi = (a^3 + 3 a c) psi,
    with c = -1/(2 sigma^2). d_phi = d/dz = d/dw, d_alpha = -d/dz = +d/dw.
    """
    phi = np.asarray(phi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    c = -0.5 / p.sigma**2
    parts = []
    if p.mode in ("R", "superposition"):
        z = phi - alpha
        a = 1j * p.u - z / (2 * p.sigma**2)
        parts.append((1j * p.u * z - z**2 / (4 * p.sigma**2), -1.0, a, a * a + c, a**3 + 3 * a * c))
    if p.mode in ("L", "superposition"):
        w = phi + alpha
        b = -1j * p.v - w / (2 * p.sigma**2)
        parts.append((-1j * p.v * w - w**2 / (4 * p.sigma**2), 1.0, b, b * b + c, b**3 + 3 * b * c))
    return parts


def psi_wdw(p: WDWParams, phi, alpha):
    """Closed-form psi_R, psi_L or their unweighted sum."""
    return sum(np.exp(lg) for lg, *_ in _wdw_parts(p, phi, alpha))


@dataclass
class _Ratios:
    """Derivatives of psi divided by psi, plus the relative density."""

    f: np.ndarray        # d_phi psi / psi
    a: np.ndarray        # d_alpha psi / psi
    ff: np.ndarray
    aa: np.ndarray
    fa: np.ndarray
    fff: np.ndarray
    faa: np.ndarray
    rel_density: np.ndarray


def _wdw_ratios(p: WDWParams, phi, alpha) -> _Ratios:
    parts = _wdw_parts(p, phi, alpha)
    top = np.maximum.reduce([np.real(lg) for lg, *_ in parts]) if len(parts) > 1 else np.real(parts[0][0])
    acc = dict(s=0, f=0, a=0, ff=0, aa=0, fa=0, fff=0, faa=0, mag=0)
    for lg, sa, d1, d2, d3 in parts:
        e = np.exp(lg - top)
        acc["s"] = acc["s"] + e
        acc["mag"] = acc["mag"] + np.abs(e)
        acc["f"] = acc["f"] + d1 * e
        acc["a"] = acc["a"] + sa * d1 * e
        acc["ff"] = acc["ff"] + d2 * e
        acc["aa"] = acc["aa"] + d2 * e
        acc["fa"] = acc["fa"] + sa * d2 * e
        acc["fff"] = acc["fff"] + d3 * e
        acc["faa"] = acc["faa"] + d3 * e
    s = acc["s"]
    rel = np.abs(s) ** 2 / acc["mag"] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return _Ratios(acc["f"] / s, acc["a"] / s, acc["ff"] / s, acc["aa"] / s, acc["fa"] / s,
                       acc["fff"] / s, acc["faa"] / s, rel)


NODE_DENSITY = 1e-300


def _wdw_velocity(p, phi, alpha):
    r = _wdw_ratios(p, phi, alpha)
    return -np.imag(r.a), np.imag(r.f), r.rel_density


def wdw_velocity(p: WDWParams, phi, alpha):
    """(alpha', phi') = (-Im(d_alpha psi/psi), Im(d_phi psi/psi)) in closed form."""
    ap, fp, rel = _wdw_velocity(p, phi, alpha)
    if np.any(rel < NODE_DENSITY) or not (np.all(np.isfinite(ap)) and np.all(np.isfinite(fp))):
        raise NodePoint(f"|psi|^2 vanishes at phi={phi}, alpha={alpha}")
    if np.ndim(ap) == 0:
        return float(ap), float(fp)
    return ap, fp


def wdw_residual(p: WDWParams, phi, alpha):
    """(d_alpha^2 - d_phi^2) psi / psi from the closed-form derivatives."""
    r = _wdw_ratios(p, phi, alpha)
    return r.aa - r.ff


# ---------------------------------------------------------------------------
# trajectory integration in (phi, alpha)

def _lean_velocity(p: WDWParams, phi, alpha):
    """(phi', alpha', relative density, |grad psi|/|psi|) with first derivatives only."""
    parts = []
    if p.mode in ("R", "superposition"):
        z = phi - alpha
        parts.append((1j * p.u * z - z**2 / (4 * p.sigma**2), -1.0, 1j * p.u - z / (2 * p.sigma**2)))
    if p.mode in ("L", "superposition"):
        w = phi + alpha
        parts.append((-1j * p.v * w - w**2 / (4 * p.sigma**2), 1.0, -1j * p.v - w / (2 * p.sigma**2)))
    if len(parts) == 1:
        _, sa, d1 = parts[0]
        return d1.imag, -sa * d1.imag, np.ones_like(phi), np.sqrt(2.0) * np.abs(d1)
    top = np.maximum(parts[0][0].real, parts[1][0].real)
    s = f = a = mag = 0
    for lg, sa, d1 in parts:
        e = np.exp(lg - top)
        s, mag = s + e, mag + np.abs(e)
        f, a = f + d1 * e, a + sa * d1 * e
    with np.errstate(divide="ignore", invalid="ignore"):
        f, a = f / s, a / s
    return f.imag, -a.imag, np.abs(s) ** 2 / mag**2, np.sqrt(np.abs(f) ** 2 + np.abs(a) ** 2)


@dataclass(frozen=True)
class RefinePolicy:
    """Step halving near nodes.

    A step of size h is halved where the density is depleted by interference
    (relative density below ``interference``) and h |v| exceeds ``fraction``
    times the node-distance estimate |psi|/|grad psi|. Halving stops at
    ``floor_fraction`` times the base step, where the step is flagged.
    The one-dimensional semi-classical flow instead halves where
    h |d phi'/d phi| exceeds ``stiffness``.
    """

    fraction: float = 0.1
    interference: float = 0.5
    floor_fraction: float = 1e-6
    stiffness: float = 0.3


def _rk4_stage_rates(fun, y, t, h, k1):
    k2, _, b2 = fun(y + 0.5 * h * k1, t + 0.5 * h)
    k3, _, b3 = fun(y + 0.5 * h * k2, t + 0.5 * h)
    k4, _, b4 = fun(y + h * k3, t + h)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), b2 | b3 | b4


def _refined_step(fun, y, t, h, policy: RefinePolicy, h_floor):
    """Advance every row of y by one RK4 step h, recursively halving rows near a node.

    ``fun(y, t)`` returns (rates, node_rate, bad): node_rate is |v| |grad psi|/|psi|
    where interference depletes the density (else 0), and bad marks rows
    to flag. Returns (y_new, floor_hit, bad_any).
    """
    k1, node_rate, bad = fun(y, t)
    near = abs(h) * node_rate > policy.fraction
    floor = np.zeros(len(y), dtype=bool)
    if not near.any():
        out, b = _rk4_stage_rates(fun, y, t, h, k1)
        return out, floor, bad | b
    if 0.5 * abs(h) < h_floor:
        out, b = _rk4_stage_rates(fun, y, t, h, k1)
        return out, near.copy(), bad | b
    out = np.empty_like(y)
    ok = ~near
    if ok.any():
        out[ok], b = _rk4_stage_rates(fun, y[ok], t, h, k1[ok])
        bad[ok] |= b
    sub, f1, b1 = _refined_step(fun, y[near], t, 0.5 * h, policy, h_floor)
    sub, f2, b2 = _refined_step(fun, sub, t + 0.5 * h, 0.5 * h, policy, h_floor)
    out[near] = sub
    floor[near] = f1 | f2
    bad[near] |= b1 | b2
    return out, floor, bad


def _wdw_rates(p: WDWParams, policy: RefinePolicy):
    def fun(y, t):
        fp, ap, rel, inv_len = _lean_velocity(p, y[:, 0], y[:, 1])
        rate = np.where(rel < policy.interference, np.hypot(fp, ap) * inv_len, 0.0)
        return np.stack([fp, ap], axis=-1), rate, np.zeros(len(y), dtype=bool)
    return fun


def integrate_wdw_ensemble(p: WDWParams, phi0, alpha0, tau_span, dtau, policy: RefinePolicy = RefinePolicy()):
    """Integrate many full Bohmian trajectories at once.

    Returns times (nt,), positions (nt, N, 2) as (phi, alpha), velocities
    (nt, N, 2) and flags (nt, N). ``dtau`` may be negative for backward runs.
    """
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    alpha0 = np.broadcast_to(np.asarray(alpha0, dtype=float), phi0.shape)
    t0, t1 = tau_span
    n = (t1 - t0) / dtau
    nsteps = int(round(n))
    if nsteps < 1 or abs(n - nsteps) > 1e-6 * max(1.0, abs(n)):
        raise ValueError(f"dtau={dtau} does not divide span {tau_span}")

    fun = _wdw_rates(p, policy)
    times = t0 + dtau * np.arange(nsteps + 1)
    y = np.stack([phi0, alpha0], axis=-1)
    pos = np.empty((nsteps + 1,) + y.shape)
    vel = np.empty_like(pos)
    flags = np.zeros((nsteps + 1, len(y)), dtype=np.int64)
    pos[0] = y
    for s in range(nsteps):
        y, floor, _ = _refined_step(fun, y, times[s], dtau, policy, policy.floor_fraction * abs(dtau))
        pos[s + 1] = y
        flags[s + 1] |= np.where(floor, STEP_FLOOR, 0)
    ap, fp, rel = _wdw_velocity(p, pos[..., 0], pos[..., 1])
    vel[..., 0], vel[..., 1] = fp, ap
    flags |= np.where(rel < NODE_DENSITY, NODE, 0)
    return times, pos, vel, flags


def integrate_wdw(p: WDWParams, s0: MiniState, tau_span, dtau, policy: RefinePolicy = RefinePolicy()) -> TrajectoryRecord:
    """RK4 on the guidance equations from s0 over tau_span."""
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    times, pos, vel, flags = integrate_wdw_ensemble(p, [s0.phi], [s0.alpha], tau_span, dtau, policy)
    return TrajectoryRecord(times, pos[:, 0], vel[:, 0], flags[:, 0], ("phi", "alpha"))


def classical_line_drift(traj: TrajectoryRecord, sign: int) -> float:
    """max |(alpha - sign*phi) - (alpha0 - sign*phi0)| per unit tau."""
    c = traj.positions[:, 1] - sign * traj.positions[:, 0]
    span = traj.times[-1] - traj.times[0]
    return float(np.max(np.abs(c - c[0])) / span)


# ---------------------------------------------------------------------------
# classification

def _point_segment_distance(P, A, B):
    AB = B - A
    L2 = np.sum(AB * AB, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.clip(np.sum((P - A) * AB, axis=-1) / L2, 0.0, 1.0)
    s = np.where(L2 > 0, s, 0.0)
    closest = A + s[..., None] * AB
    return np.linalg.norm(P - closest, axis=-1)


def find_cycle(traj: TrajectoryRecord, delta_cycle=1e-3, cos_min=0.999, anchors=8):
    """Index at which the path first returns near one of its early points, or None.

    Anchors are taken from the first part of the record; a return counts once
    the path has moved at least 10 delta away from the anchor, comes back
    within delta of it (segment distance) and is heading the same way.
    """
    pos, vel = traj.positions, traj.velocities
    n = len(pos)
    for j in np.unique(np.linspace(0, n // 4, anchors).astype(int)):
        P, v0 = pos[j], vel[j]
        d = np.linalg.norm(pos[j:] - P, axis=-1)
        away = np.nonzero(d > 10 * delta_cycle)[0]
        if away.size == 0:
            continue
        start = j + away[0]
        if start >= n - 1:
            continue
        seg = _point_segment_distance(P, pos[start:-1], pos[start + 1:])
        hits = np.nonzero(seg < delta_cycle)[0]
        for h in hits:
            v = vel[start + h]
            c = np.dot(v, v0) / (np.linalg.norm(v) * np.linalg.norm(v0) + 1e-300)
            if c > cos_min:
                return int(start + h)
    return None


def classify_trajectory(traj: TrajectoryRecord, alpha_asym=10.0, delta_cycle=1e-3, cos_min=0.999) -> str:
    """Label a (phi, alpha) trajectory by its asymptotic sides or as cyclic."""
    if find_cycle(traj, delta_cycle, cos_min) is not None:
        return "cyclic"
    phi, alpha = traj.positions[:, 0], traj.positions[:, 1]
    if abs(alpha[0]) < alpha_asym or abs(alpha[-1]) < alpha_asym:
        return "undetermined"

    def side(x):
        return "left" if x < 0 else "right"

    return f"{side(phi[0])}->{side(phi[-1])}"


def asymptotic_slopes(traj: TrajectoryRecord, alpha_asym=10.0):
    """d alpha / d phi on the early and late parts with |alpha| >= alpha_asym."""
    phi, alpha = traj.positions[:, 0], traj.positions[:, 1]
    out = []
    for sel in (np.nonzero(np.abs(alpha) >= alpha_asym)[0],):
        early = sel[sel < len(alpha) // 2]
        late = sel[sel >= len(alpha) // 2]
        for part in (early, late):
            if part.size < 3:
                out.append(np.nan)
                continue
            fp, ap = traj.velocities[part, 0], traj.velocities[part, 1]
            out.append(float(np.median(ap / fp)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Friedmann residuals along full trajectories

@dataclass
class FriedmannResidual:
    times: np.ndarray
    constraint: np.ndarray           # first-order equation with quantum potentials
    field_equation: np.ndarray       # second-order phi equation with quantum potentials
    classical_constraint: np.ndarray  # same equations with Q_G = Q_M = 0
    classical_field_equation: np.ndarray


def friedmann_residual(p: WDWParams, traj: TrajectoryRecord, model: MiniModelParams = MiniModelParams(),
                       derivatives: str = "exact") -> FriedmannResidual:
    """Evaluate both equations of motion (tau gauge) along a trajectory.

    With ``derivatives="exact"`` the tau-derivatives along the path come from
    the guidance field itself (phi'' = phi'_phi phi' + phi'_alpha alpha');
    ``"finite"`` differentiates the recorded positions instead. The quantum
    potentials always use closed-form derivatives of |psi|.
    In the tau gauge (N = e^{3 alpha}) the constraint reads
    alpha'^2 = (phi'^2 + 2 e^{6a} V_M - R_pp/R)/kappa + 2 e^{6a} V_G + R_aa/(kappa^2 R)
    and the field equation phi'' + d_phi(-R_pp/2R + R_aa/(2 kappa R)) = 0.
    """
    if not model.is_default:
        warnings.warn("the closed-form packets solve the Wheeler-DeWitt equation only for the default model",
                      stacklevel=2)
    if derivatives not in ("exact", "finite"):
        raise ValueError("derivatives must be 'exact' or 'finite'")
    t = traj.times
    phi, alpha = traj.positions[:, 0], traj.positions[:, 1]
    r = _wdw_ratios(p, phi, alpha)
    if derivatives == "exact":
        fp, ap = np.imag(r.f), -np.imag(r.a)
        fpp = np.imag(r.ff - r.f * r.f) * fp + np.imag(r.fa - r.f * r.a) * ap
    else:
        fp = np.gradient(phi, t, edge_order=2)
        ap = np.gradient(alpha, t, edge_order=2)
        fpp = np.gradient(fp, t, edge_order=2)
    # R''/R = Re(psi''/psi) + Im(psi'/psi)^2
    Rff = np.real(r.ff) + np.imag(r.f) ** 2
    Raa = np.real(r.aa) + np.imag(r.a) ** 2
    # d_phi of the two ratios
    d_ff = r.fff - r.ff * r.f
    d_f = r.ff - r.f * r.f
    d_aa = r.faa - r.aa * r.f
    d_a = r.fa - r.a * r.f
    dRff = np.real(d_ff) + 2 * np.imag(r.f) * np.imag(d_f)
    dRaa = np.real(d_aa) + 2 * np.imag(r.a) * np.imag(d_a)
    k = model.kappa
    cl = ap**2 - fp**2 / k
    if model.V_M != 0 or model.k_curv != 0 or model.Lambda != 0:
        e6 = np.exp(6 * alpha)
        cl = cl - 2 * e6 * (model.V_M / k + model.V_G(alpha))
    constraint = cl - (-Rff / k + Raa / k**2)
    field_eq = fpp + (-0.5 * dRff + 0.5 * dRaa / k)
    return FriedmannResidual(t, constraint, field_eq, cl, fpp)


# ---------------------------------------------------------------------------
# semi-classical approximations: the scalar field as a free particle of unit mass

def _chi_parts(kinds, p: WDWParams, alpha0, tau0, phi, tau):
    """(log chi_k + log weight, D1, D2) for each packet, D = d_phi log-derivatives."""
    phi = np.asarray(phi, dtype=float)
    tb = np.asarray(tau, dtype=float) - tau0
    sig = p.sigma
    s = sig * (1 + 1j * tb / (2 * sig**2))
    norm = -0.25 * np.log(2 * np.pi) - 0.5 * np.log(s)
    lw = -0.5 * np.log(2.0) if len(kinds) == 2 else 0.0
    out = []
    for kind in kinds:
        if kind == "R":
            y = phi - alpha0 - p.u * tb
            lg = 1j * p.u * (phi - alpha0 - p.u * tb / 2) - y**2 / (4 * s * sig)
            d1 = 1j * p.u - y / (2 * s * sig)
        else:
            y = phi + alpha0 + p.v * tb
            lg = -1j * p.v * (phi + alpha0 + p.v * tb / 2) - y**2 / (4 * s * sig)
            d1 = -1j * p.v - y / (2 * s * sig)
        out.append((lg + norm + lw, d1, d1 * d1 - 1 / (2 * s * sig)))
    return out


def _kinds(p: WDWParams, kind=None):
    if kind is not None:
        return (kind,)
    return ("R", "L") if p.mode == "superposition" else (p.mode,)


def chi_free_packet(kind, p: WDWParams, alpha0, tau0, phi, tau):
    """Freely evolved conditional packet chi_R, chi_L, or (chi_R + chi_L)/sqrt 2.

    ``kind`` is "R", "L" or "superposition".
    """
    kinds = ("R", "L") if kind == "superposition" else (kind,)
    return sum(np.exp(lg) for lg, _, _ in _chi_parts(kinds, p, alpha0, tau0, phi, tau))


def _chi_ratios(p, alpha0, tau0, phi, tau, kinds):
    """(chi'/chi, chi''/chi, relative density); normalization and weights cancel."""
    tb = tau - tau0
    sig = p.sigma
    c = 1 / (2 * sig * sig * (1 + 1j * tb / (2 * sig * sig)))   # 1/(2 s sigma)
    parts = []
    for kind in kinds:
        if kind == "R":
            y = phi - alpha0 - p.u * tb
            ph = p.u * (phi - alpha0 - p.u * tb / 2)
            d1 = 1j * p.u - c * y
        else:
            y = phi + alpha0 + p.v * tb
            ph = -p.v * (phi + alpha0 + p.v * tb / 2)
            d1 = -1j * p.v - c * y
        parts.append((-0.5 * c * y * y + 1j * ph, d1))
    if len(parts) == 1:
        d1 = parts[0][1]
        return d1, d1 * d1 - c, np.ones(np.shape(d1))
    (lr, dr), (ll, dl) = parts
    top = np.maximum(lr.real, ll.real)
    er, el = np.exp(lr - top), np.exp(ll - top)
    s = er + el
    wr, wl = er / s, el / s
    rel = (s.real**2 + s.imag**2) / (np.abs(er) + np.abs(el)) ** 2
    return wr * dr + wl * dl, wr * (dr * dr - c) + wl * (dl * dl - c), rel


def sc_phase_derivatives(p: WDWParams, alpha0, tau0, phi, tau, kind=None):
    """(d_phi S, -2 d_tau S) of the analytic conditional packet.

    -2 d_tau S = -Re(chi''/chi) follows from i chi_tau = -chi''/2.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        f, ff, _ = _chi_ratios(p, alpha0, tau0, phi, tau, _kinds(p, kind))
    return np.imag(f), -np.real(ff)


def two_energy_closed_form(p: WDWParams, kind=None) -> float:
    """2<H_M> of the conditional packets for sigma-separated packets."""
    kind = kind or p.mode
    spread = 1 / (4 * p.sigma**2)
    if kind == "R":
        return p.u**2 + spread
    if kind == "L":
        return p.v**2 + spread
    return 0.5 * (p.u**2 + p.v**2) + spread


def packet_grid(p: WDWParams, alpha0, tau_bar=0.0, points_per_sigma=100, margin=10.0) -> Grid1D:
    """Grid covering both conditional packets at tau0 + tau_bar."""
    width = p.sigma * np.sqrt(1 + tau_bar**2 / (4 * p.sigma**4))
    centers = [alpha0 + p.u * tau_bar, -alpha0 - p.v * tau_bar]
    lo, hi = min(centers) - margin * width, max(centers) + margin * width
    n = int(np.ceil((hi - lo) / p.sigma * points_per_sigma)) + 1
    return Grid1D(lo, hi, n)


def two_energy_quadrature(p: WDWParams, alpha0, tau0=0.0, kind=None, points_per_sigma=100) -> float:
    """2<chi|H_M|chi>/<chi|chi> by grid quadrature of the analytic packet."""
    kind = kind or p.mode
    g = packet_grid(p, alpha0, 0.0, points_per_sigma)
    wf = WaveFunction1D(g, chi_free_packet(kind, p, alpha0, tau0, g.x, tau0), tau0)
    return 2 * expectation_energy(wf, None, 1.0) / wf.norm2()


@dataclass
class UsualSCResult:
    times: np.ndarray
    alpha: np.ndarray
    phi_mean: np.ndarray
    alpha_prime: float
    two_energy: float
    two_energy_quadrature: float

    @property
    def cross_check(self) -> float:
        return abs(self.two_energy_quadrature - self.two_energy) / self.two_energy


def usual_sc_run(p: WDWParams, alpha0, tau0, tau_span, dtau=None, alpha_sign=1, kind=None) -> UsualSCResult:
    """Scale factor driven by the (constant) expectation value of H_M."""
    kind = kind or p.mode
    e_closed = two_energy_closed_form(p, kind)
    e_quad = two_energy_quadrature(p, alpha0, tau0, kind)
    ap = alpha_sign * np.sqrt(e_closed)
    dtau = dtau or (tau_span[1] - tau_span[0]) / 1000
    n = int(round((tau_span[1] - tau_span[0]) / dtau))
    times = tau_span[0] + dtau * np.arange(n + 1)
    alpha = alpha0 + ap * (times - tau0)
    tb = times - tau0
    centers = {"R": alpha0 + p.u * tb, "L": -alpha0 - p.v * tb}
    ks = ("R", "L") if kind == "superposition" else (kind,)
    phi_mean = sum(centers[k] for k in ks) / len(ks)
    return UsualSCResult(times, alpha, phi_mean, float(ap), e_closed, e_quad)


def bohmian_sc_ensemble(p: WDWParams, phi0, alpha0, tau0, tau_span, dtau, alpha_sign=1,
                        alpha_start=None, kind=None, policy: RefinePolicy = RefinePolicy()):
    """Integrate phi' = d_phi S and alpha' = sign sqrt(-2 d_tau S) for many phi0.

    ``alpha0`` fixes the conditional packets (alpha at tau0); ``alpha_start``
    is alpha at tau_span[0] (defaults to alpha0). Steps where -2 d_tau S < 0
    at any RK stage are flagged FORBIDDEN and use alpha' = 0 there. Steps
    are halved where h |d phi'/d phi| exceeds ``policy.stiffness``, which
    happens at the interference minima of chi.
    Returns times, positions (nt, N, 2) as (phi, alpha), velocities, flags
    and the raw -2 d_tau S at the recorded points.
    """
    kinds = _kinds(p, kind)
    phi0 = np.atleast_1d(np.asarray(phi0, dtype=float))
    a_start = alpha0 if alpha_start is None else alpha_start
    t0, t1 = tau_span
    nsteps = int(round((t1 - t0) / dtau))
    if nsteps < 1 or abs((t1 - t0) / dtau - nsteps) > 1e-6 * nsteps:
        raise ValueError(f"dtau={dtau} does not divide span {tau_span}")
    times = t0 + dtau * np.arange(nsteps + 1)

    def rates(phi, t):
        f, ff, _ = _chi_ratios(p, alpha0, tau0, phi, t, kinds)
        # d phi'/d phi = Im(chi''/chi - (chi'/chi)^2) sets the local stiffness
        return np.imag(f), -np.real(ff), np.abs(np.imag(ff - f * f))

    def fun(y, t):
        fp, q, stiff = rates(y[:, 0], t)
        k = np.stack([fp, alpha_sign * np.sqrt(np.maximum(q, 0.0))], axis=-1)
        return k, stiff * (policy.fraction / policy.stiffness), q < 0

    y = np.stack([phi0, np.full_like(phi0, a_start)], axis=-1)
    pos = np.empty((nsteps + 1, len(y), 2))
    flags = np.zeros((nsteps + 1, len(y)), dtype=np.int64)
    pos[0] = y
    h_floor = policy.floor_fraction * abs(dtau)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(nsteps):
            y, floor, bad = _refined_step(fun, y, times[s], dtau, policy, h_floor)
            pos[s + 1] = y
            flags[s + 1] |= np.where(floor, STEP_FLOOR, 0) | np.where(bad, FORBIDDEN, 0)
        fp, raw, _ = rates(pos[..., 0], times[:, None])
    vel = np.stack([fp, alpha_sign * np.sqrt(np.maximum(raw, 0.0))], axis=-1)
    flags |= np.where(raw < 0, FORBIDDEN, 0)
    return times, pos, vel, flags, raw


def bohmian_sc_run(s0: SCMiniState, tau_span, dtau) -> TrajectoryRecord:
    """One Bohmian semi-classical trajectory (phi, alpha) from s0."""
    times, pos, vel, flags, raw = bohmian_sc_ensemble(
        s0.packet, [s0.phi], s0.alpha0, s0.tau0, tau_span, dtau, s0.alpha_sign, alpha_start=s0.alpha)
    return TrajectoryRecord(times, pos[:, 0], vel[:, 0], flags[:, 0], ("phi", "alpha"),
                            extra={"minus_two_dtau_S": raw[:, 0]})


def no_crossing_report(phi, left):
    """Ordering checks for an ensemble of phi-trajectories of shape (nt, N).

    ``left`` marks the trajectories that start in the left group. Returns
    (side_changes, order_kept): the number of trajectories that ever pass
    a member of the other group, and whether the initial ordering survives.
    """
    phi = np.asarray(phi)
    left = np.asarray(left, dtype=bool)
    changes = 0
    if left.any() and (~left).any():
        lmax = phi[:, left].max(axis=1)
        rmin = phi[:, ~left].min(axis=1)
        changes = int(np.count_nonzero(np.any(phi[:, left] > rmin[:, None], axis=0))
                      + np.count_nonzero(np.any(phi[:, ~left] < lmax[:, None], axis=0)))
    order = np.argsort(phi[0], kind="stable")
    kept = bool(np.all(np.diff(phi[:, order], axis=1) >= 0))
    return changes, kept


def single_packet_phi(p: WDWParams, alpha0, tau0, phi0, tau):
    """Exact guidance solution inside chi_R: phi_R = u tb + phi_R0 |s(tb)|/sigma."""
    tb = np.asarray(tau) - tau0
    return alpha0 + p.u * tb + (phi0 - alpha0) * np.sqrt(1 + tb**2 / (4 * p.sigma**4))


def sc_density_grid(p: WDWParams, alpha0, tau0, tau, points_per_sigma=40):
    g = packet_grid(p, alpha0, tau - tau0, points_per_sigma)
    chi = chi_free_packet(p.mode, p, alpha0, tau0, g.x, tau)
    return g, np.abs(chi) ** 2


def sample_sc_initial(p: WDWParams, alpha0, tau0, count, seed):
    """Initial phi values drawn from |chi(tau0)|^2."""
    g, dens = sc_density_grid(p, alpha0, tau0, tau0, points_per_sigma=200)
    return np.sort(sample_from_grid(g, dens, count, np.random.default_rng(seed)))


def sc_equivariance_ks(p: WDWParams, alpha0, tau0, phi_final, tau):
    g, dens = sc_density_grid(p, alpha0, tau0, tau, points_per_sigma=200)
    return ks_distance(phi_final, g, dens)


# ---------------------------------------------------------------------------
# scheme comparison

@dataclass
class SchemeTable:
    times: np.ndarray
    full: dict
    usual: dict
    bohmian: dict
    windows: dict
    asymptotic: dict = field(default_factory=dict)
    rms: dict = field(default_factory=dict)

    def rows(self):
        """Flat per-tau rows for CSV output."""
        cols = ["tau", "alpha_full", "phi_full", "alpha_prime_full",
                "alpha_usual", "phi_usual", "alpha_prime_usual",
                "alpha_bohmsc", "phi_bohmsc", "alpha_prime_bohmsc"]
        data = np.column_stack([self.times,
                                self.full["alpha"], self.full["phi"], self.full["alpha_prime"],
                                self.usual["alpha"], self.usual["phi"], self.usual["alpha_prime"],
                                self.bohmian["alpha"], self.bohmian["phi"], self.bohmian["alpha_prime"]])
        return cols, data


def compare_schemes(p: WDWParams, alpha0, phi0, tau0, tau_span, dtau, early=None, late=None) -> SchemeTable:
    """Full, usual semi-classical and Bohmian semi-classical runs from shared data.

    ``early`` and ``late`` are (tau_a, tau_b) windows for the asymptotic
    comparison; defaults are the 10-25 % and the last 25 % of the span.
    """
    t0, t1 = tau_span
    span = t1 - t0
    early = early or (t0 + 0.10 * span, t0 + 0.25 * span)
    late = late or (t1 - 0.25 * span, t1)
    tf, pf, vf, ff = integrate_wdw_ensemble(p, [phi0], [alpha0], tau_span, dtau)
    us = usual_sc_run(p, alpha0, tau0, tau_span, dtau)
    tb, pb, vb, fb, _ = bohmian_sc_ensemble(p, [phi0], alpha0, tau0, tau_span, dtau)
    full = {"alpha": pf[:, 0, 1], "phi": pf[:, 0, 0], "alpha_prime": vf[:, 0, 1], "flags": ff[:, 0]}
    usual = {"alpha": us.alpha, "phi": us.phi_mean, "alpha_prime": np.full_like(us.alpha, us.alpha_prime)}
    bohm = {"alpha": pb[:, 0, 1], "phi": pb[:, 0, 0], "alpha_prime": vb[:, 0, 1], "flags": fb[:, 0]}
    table = SchemeTable(tf, full, usual, bohm, {"early": early, "late": late})
    table.asymptotic["usual_two_energy_quadrature"] = us.two_energy_quadrature
    for name, (a, b) in table.windows.items():
        sel = (tf >= a) & (tf <= b)
        for scheme, d in (("full", full), ("usual", usual), ("bohmian", bohm)):
            table.asymptotic[f"{scheme}_{name}"] = float(np.mean(d["alpha_prime"][sel]))
        for scheme, d in (("usual", usual), ("bohmian", bohm)):
            diff = d["alpha_prime"][sel] - full["alpha_prime"][sel]
            table.rms[f"{scheme}_{name}"] = float(np.sqrt(np.mean(diff**2)))
    for scheme, d in (("usual", usual), ("bohmian", bohm)):
        table.rms[f"{scheme}_alpha_all"] = float(np.sqrt(np.mean((d["alpha"] - full["alpha"]) ** 2)))
    return table
