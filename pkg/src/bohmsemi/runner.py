"""Scenario execution behind the command line.

Each runner writes its CSV tables into the run directory and returns a
dictionary with checks, flag counts and figure descriptions; the caller adds
timing and writes the manifest. Work is split into chunks whose boundaries
do not depend on the worker count, so outputs are identical for any number
of threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import minisuperspace as ms
from .bohmian import NodePolicy, propagate_frames, rk4_ensemble
from .config import ScenarioConfig
from .grid import Grid1D, Grid2D, PotentialField, WaveFunction1D, gaussian_packet, normalize
from .io import write_csv
from .newton import SNState, bohmian_potential, local_minima, meanfield_energy, meanfield_potential, \
    sn_bohmian_step, sn_meanfield_step
from .quadrature import ks_distance, sample_density
from .semiclassical import (BohmianSCState, FullQuantumState, MeanFieldState, bilinear, bohmian_sc_step,
                            conditional_wavefunction, full_step, harmonic, interaction_term, meanfield_step,
                            splitting_state)
from .bohmian import velocity_at
from .propagate import CrankNicolson2D

CHUNK = 8            # trajectories per task in mini-superspace families
SC_CHUNK = 64        # field trajectories per task in semi-classical ensembles
ENSEMBLE_CHUNK = 1000


def pmap(fn, items, threads):
    """Ordered map over a thread pool (plain loop for one thread)."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def check(name, value, threshold, passed):
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def _policy(cfg):
    return NodePolicy(cfg["node"]["eps_node"], cfg["node"]["v_max"])


# ---------------------------------------------------------------------------
# mini-superspace

def _starts(cfg):
    tr = cfg["trajectories"]
    pts = [tuple(p) for p in tr["starts"]]
    if tr["fan_phi"]:
        lo, hi, n = tr["fan_phi"]
        pts += [(float(f), tr["fan_alpha"]) for f in np.linspace(lo, hi, int(n))]
    return pts


def run_minisuperspace(cfg: ScenarioConfig, out: Path, threads: int) -> dict:
    from .errors import ConfigError

    pk = cfg["packet"]
    p = ms.WDWParams(pk["u"], pk["v"], pk["sigma"], pk["mode"])
    model = ms.MiniModelParams(**cfg["model"])
    tr = cfg["trajectories"]
    starts = _starts(cfg)
    if not starts:
        raise ConfigError("trajectories.starts: no initial points (give starts or fan_phi)",
                          field="trajectories.starts")
    bad = [i for i in tr["highlight"] if not 0 <= i < len(starts)]
    if bad:
        raise ConfigError(f"trajectories.highlight: index {bad[0]} out of range", field="trajectories.highlight")
    result = {"checks": [], "flags": {}, "figures": [], "summary": {"regime_warnings": p.regime_warnings()}}
    phi0 = np.array([s[0] for s in starts])
    alpha0 = np.array([s[1] for s in starts])
    span = (tr["tau_start"], tr["tau_end"])

    def chunk(k):
        sl = slice(k, k + CHUNK)
        return ms.integrate_wdw_ensemble(p, phi0[sl], alpha0[sl], span, tr["dtau"])

    parts = pmap(chunk, range(0, len(starts), CHUNK), threads)
    times = parts[0][0]
    pos = np.concatenate([q[1] for q in parts], axis=1)
    vel = np.concatenate([q[2] for q in parts], axis=1)
    flags = np.concatenate([q[3] for q in parts], axis=1)

    cl = cfg["classify"]
    labels, tables, residuals = [], [], []
    cols = ["tau", "phi", "alpha", "phi_prime", "alpha_prime", "alpha_minus_phi", "alpha_plus_phi", "flags"]
    for i in range(len(starts)):
        rec = ms.TrajectoryRecord(times, pos[:, i], vel[:, i], flags[:, i], ("phi", "alpha"))
        labels.append(ms.classify_trajectory(rec, cl["alpha_asym"], cl["delta_cycle"], cl["cos_min"]))
        res = ms.friedmann_residual(p, rec, model)
        residuals.append(float(np.max(np.abs(res.constraint))))
        name = f"trajectory_{i:03d}.csv"
        f, a = pos[:, i, 0], pos[:, i, 1]
        write_csv(out / name, cols, np.column_stack([times, f, a, vel[:, i, 0], vel[:, i, 1], a - f, a + f,
                                                     flags[:, i]]))
        tables.append(name)
    write_csv(out / "labels.csv", ["index", "phi0", "alpha0", "label_code", "max_constraint_residual"],
              np.column_stack([np.arange(len(starts)), phi0, alpha0,
                               [ms.LABELS.index(lab) for lab in labels], residuals]))
    counts = {lab: labels.count(lab) for lab in ms.LABELS if lab in labels}
    result["summary"].update(labels=labels, label_counts=counts, label_codes=list(ms.LABELS))
    result["flags"]["wdw"] = {"node": int(np.count_nonzero(flags & ms.NODE)),
                              "step_floor": int(np.count_nonzero(flags & ms.STEP_FLOOR))}
    if pk["mode"] in ("R", "L"):
        sign = 1 if pk["mode"] == "R" else -1
        drift = max(ms.classical_line_drift(ms.TrajectoryRecord(times, pos[:, i], vel[:, i], flags[:, i]), sign)
                    for i in range(len(starts)))
        result["checks"].append(check(f"classical line drift per unit tau (mode {pk['mode']})", drift, 1e-9,
                                      drift < 1e-9))
    result["checks"].append(check("max Friedmann residual with quantum potentials", max(residuals), 1e-8,
                                  max(residuals) < 1e-8))
    fig = cfg["figure"]
    result["figures"].append({"name": "trajectories", "tables": tables, "x": "phi", "y": "alpha",
                              "xlabel": "φ", "ylabel": "α", "title": fig["title"],
                              "highlight": tr["highlight"], "viewport": fig["viewport"] or None})

    if cfg.has("compare"):
        c = cfg["compare"]
        tab = ms.compare_schemes(p, c["alpha0"], c["phi0"], c["tau0"], (c["tau0"], c["tau_end"]), c["dtau"],
                                 tuple(c["early"]) or None, tuple(c["late"]) or None)
        cols_c, data = tab.rows()
        write_csv(out / "compare.csv", cols_c, data)
        result["summary"]["compare"] = {"asymptotic": tab.asymptotic, "rms": tab.rms, "windows": tab.windows}
        e2 = ms.two_energy_closed_form(p)
        result["checks"].append(check("usual-SC 2<H> quadrature vs closed form (relative)",
                                      abs(tab.asymptotic["usual_two_energy_quadrature"] - e2) / e2, 1e-3,
                                      abs(tab.asymptotic["usual_two_energy_quadrature"] - e2) / e2 < 1e-3))
        for end in ("early", "late"):
            b, u = tab.rms[f"bohmian_{end}"], tab.rms[f"usual_{end}"]
            result["checks"].append(check(f"RMS alpha' bohmian-SC < usual-SC ({end})", b, u, b < u))
        result["flags"]["compare"] = {"forbidden": int(np.count_nonzero(tab.bohmian["flags"] & ms.FORBIDDEN))}
        result["figures"].append({"name": "compare", "tables": ["compare.csv"] * 3, "x": "tau",
                                  "y": "alpha_prime_full", "xlabel": "τ", "ylabel": "α′", "highlight": [],
                                  "viewport": None, "series_y": ["alpha_prime_full", "alpha_prime_usual",
                                                                 "alpha_prime_bohmsc"]})

    if cfg.has("semiclassical"):
        sc = cfg["semiclassical"]
        phi_s = ms.sample_sc_initial(p, sc["alpha0"], sc["tau0"], sc["count"], cfg.seed)
        left = phi_s < 0

        def sc_chunk(k):
            sl = slice(k, k + SC_CHUNK)
            return ms.bohmian_sc_ensemble(p, phi_s[sl], sc["alpha0"], sc["tau0"], (sc["tau0"], sc["tau_end"]),
                                          sc["dtau"], sc["alpha_sign"])

        parts = pmap(sc_chunk, range(0, len(phi_s), SC_CHUNK), threads)
        t_sc = parts[0][0]
        phi_t = np.concatenate([q[1][:, :, 0] for q in parts], axis=1)
        alpha_t = np.concatenate([q[1][:, :, 1] for q in parts], axis=1)
        fp_t = np.concatenate([q[2][:, :, 0] for q in parts], axis=1)
        fl = np.concatenate([q[3] for q in parts], axis=1)
        names = [f"phi_{i:03d}" for i in range(len(phi_s))]
        write_csv(out / "sc_phi.csv", ["tau"] + names, np.column_stack([t_sc, phi_t]))
        write_csv(out / "sc_alpha.csv", ["tau"] + names, np.column_stack([t_sc, alpha_t]))
        changes, kept = ms.no_crossing_report(phi_t, left)
        result["checks"].append(check("semi-classical side changes", changes, 0, changes == 0))
        result["checks"].append(check("semi-classical ordering preserved", kept, True, kept))
        if left.any():
            n = len(t_sc)
            early = np.abs(fp_t[: max(1, n // 50), left])
            late = np.abs(fp_t[-max(1, n // 10):, left])
            e_err = float(np.max(np.abs(early - abs(p.u)) / abs(p.u)))
            l_err = float(np.max(np.abs(late - abs(p.v)) / abs(p.v)))
            result["checks"].append(check("left-starters |phi'| near u early (relative)", e_err, 0.05, e_err < 0.05))
            result["checks"].append(check("left-starters |phi'| near v late (relative)", l_err, 0.05, l_err < 0.05))
        result["summary"]["semiclassical"] = {
            "count": len(phi_s), "left": int(left.sum()),
            "ks_final": ms.sc_equivariance_ks(p, sc["alpha0"], sc["tau0"], phi_t[-1], sc["tau_end"])}
        result["flags"]["semiclassical"] = {"forbidden": int(np.count_nonzero(fl & ms.FORBIDDEN)),
                                            "step_floor": int(np.count_nonzero(fl & ms.STEP_FLOOR))}
    # only the exact-dynamics events count against the budget; forbidden
    # steps are a property of the approximation being tested
    result["flagged_steps"] = int(np.count_nonzero(flags))
    return result


# ---------------------------------------------------------------------------
# two particles

def _coupling(cfg):
    c = cfg["coupling"]
    if c["type"] == "bilinear":
        return bilinear(c["lam"])
    return harmonic(c["k"], c["omega1"], cfg["particles"]["m1"])


def _grid2(cfg):
    g = cfg["grid"]
    return Grid2D(Grid1D(*g["x1"]), Grid1D(*g["x2"]))


def run_two_particle(cfg: ScenarioConfig, out: Path, threads: int) -> dict:
    grid = _grid2(cfg)
    pa, st, it = cfg["particles"], cfg["state"], cfg["integrator"]
    m1, m2, X1, X2 = pa["m1"], pa["m2"], pa["X1"], pa["X2"]
    V = _coupling(cfg)
    policy = _policy(cfg)
    psi0 = splitting_state(grid, st["k"], st["sigma1"], st["sigma2"], st["x2_center"])
    dt, nsteps, stride = it["dt"], it["steps"], it["stride"]

    chi0, _ = conditional_wavefunction(psi0, X2)
    P2 = float(m2 * velocity_at(psi0, np.array([X1, X2]), (m1, m2), policy)[1])
    x1 = grid.axis1.x

    def full(mass2):
        prop = CrankNicolson2D(grid, m1, mass2)
        Vg = V.on_grid(grid)
        s = FullQuantumState(psi0, X1, X2, psi0.t)
        rows, snaps = [(s.t, s.X1, s.X2, np.nan, s.psi.norm2(), interaction_term(s.psi, X1, X2, mass2, policy,
                                                                                  m1, V)[1])], []
        for k in range(1, nsteps + 1):
            s = full_step(s, Vg, m1, mass2, dt, policy, prop)
            ratio = np.nan
            if k % stride == 0:
                ratio = interaction_term(s.psi, s.X1, s.X2, mass2, policy, m1, V)[1]
                chi, _ = conditional_wavefunction(s.psi, s.X2)
                snaps.append((k, chi.psi))
            rows.append((s.t, s.X1, s.X2, np.nan, s.psi.norm2(), ratio))
        return np.array(rows), snaps, s.flags

    def meanfield(_):
        s = MeanFieldState(chi0.copy(), X2, P2, psi0.t)
        rows = [(s.t, np.nan, s.X2, s.P2, s.chi.norm2(), np.nan)]
        for _k in range(nsteps):
            s = meanfield_step(s, V, m1, m2, dt)
            rows.append((s.t, np.nan, s.X2, s.P2, s.chi.norm2(), np.nan))
        return np.array(rows), [], 0

    def bohmian(_):
        s = BohmianSCState(chi0.copy(), X1, X2, P2, psi0.t)
        rows, snaps = [(s.t, s.X1, s.X2, s.P2, s.chi.norm2(), np.nan)], []
        for k in range(1, nsteps + 1):
            s = bohmian_sc_step(s, V, m1, m2, dt, policy)
            if k % stride == 0:
                snaps.append((k, s.chi.psi))
            rows.append((s.t, s.X1, s.X2, s.P2, s.chi.norm2(), np.nan))
        return np.array(rows), snaps, s.flags

    tasks = [("full", lambda: full(m2)), ("meanfield", lambda: meanfield(None)), ("bohmian_sc", lambda: bohmian(None))]
    sweep = cfg["sweep"]["m2"] if cfg.has("sweep") else []
    tasks += [(f"sweep_{i}", (lambda mm: (lambda: full(mm)))(mm)) for i, mm in enumerate(sweep)]
    results = dict(zip([t[0] for t in tasks], pmap(lambda t: t[1](), tasks, threads)))

    cols = ["t", "X1", "X2", "P2", "norm", "interaction_ratio"]
    for name in ("full", "meanfield", "bohmian_sc"):
        rows, snaps, _ = results[name]
        write_csv(out / f"{name}.csv", cols, rows)
        for k, psi in snaps:
            write_csv(out / f"snapshot_{name}_{k:06d}.csv", ["x1", "re", "im"], np.column_stack([x1, psi.real, psi.imag]))
    full_rows = results["full"][0]

    def err(name):
        return float(np.sqrt(np.mean((results[name][0][:, 2] - full_rows[:, 2]) ** 2)))

    e_mf, e_b = err("meanfield"), err("bohmian_sc")
    norm_drift = float(np.max(np.abs(np.diff(full_rows[:, 4]))))
    checks = [check("err(BohmianSC) < err(meanfield) for X2", e_b, e_mf, e_b < e_mf),
              check("full 2D norm drift per step", norm_drift, 1e-10, norm_drift < 1e-10)]
    summary = {"err_meanfield": e_mf, "err_bohmian_sc": e_b,
               "ratio_initial": float(full_rows[0, 5]), "ratio_final": float(full_rows[-1, 5])}
    if sweep:
        finals = [float(results[f"sweep_{i}"][0][-1, 5]) for i in range(len(sweep))]
        write_csv(out / "sweep.csv", ["m2_over_m1", "interaction_ratio_final"],
                  np.column_stack([np.array(sweep) / m1, finals]))
        mono = bool(np.all(np.diff(finals) < 0))
        checks.append(check("interaction ratio decreasing in m2/m1", finals, "decreasing", mono))
        summary["sweep"] = dict(zip([str(m) for m in sweep], finals))
    flagged = int(bool(results["full"][2])) + int(bool(results["bohmian_sc"][2]))
    figures = [{"name": "X2", "tables": ["full.csv", "meanfield.csv", "bohmian_sc.csv"], "x": "t", "y": "X2",
                "xlabel": "t", "ylabel": "X2", "title": "classical coordinate by scheme", "highlight": [0],
                "viewport": None}]
    return {"checks": checks, "summary": summary, "figures": figures,
            "flags": {"full": int(results["full"][2]), "bohmian_sc": int(results["bohmian_sc"][2])},
            "flagged_steps": flagged}


# ---------------------------------------------------------------------------
# Schroedinger-Newton

def run_schroedinger_newton(cfg: ScenarioConfig, out: Path, threads: int) -> dict:
    g = Grid1D(*cfg["grid"]["x"])
    st, mo, it = cfg["state"], cfg["model"], cfg["integrator"]
    policy = _policy(cfg)
    psi = sum(gaussian_packet(g.x, c, st["sigma"], st["k"]) for c in st["centers"])
    wf = normalize(WaveFunction1D(g, np.asarray(psi, dtype=complex), 0.0))
    X = cfg["particle"]["X"]
    s0 = SNState(wf, X, 0.0, mo["G"], mo["m"], mo["eps_soft"])

    def meanfield(_):
        s, rows = s0, [(0.0, wf.norm2(), meanfield_energy(s0))]
        for k in range(1, it["steps"] + 1):
            s = sn_meanfield_step(s, it["dt"])
            rows.append((s.t, s.psi.norm2(), meanfield_energy(s) if k % it["stride"] == 0 else np.nan))
        return np.array(rows), s

    def bohmian(_):
        s, rows = s0, [(0.0, X, wf.norm2())]
        for _k in range(it["steps"]):
            s = sn_bohmian_step(s, it["dt"], policy)
            rows.append((s.t, s.X, s.psi.norm2()))
        return np.array(rows), s

    (mf_rows, mf_end), (b_rows, b_end) = pmap(lambda f: f(None), [meanfield, bohmian], threads)
    write_csv(out / "sn_meanfield.csv", ["t", "norm", "energy"], mf_rows)
    write_csv(out / "sn_bohmian.csv", ["t", "X", "norm"], b_rows)
    V_mf, V_b = meanfield_potential(s0), bohmian_potential(s0)
    write_csv(out / "potentials.csv", ["x", "V_meanfield", "V_bohmian", "V_meanfield_end", "V_bohmian_end"],
              np.column_stack([g.x, V_mf.values, V_b.values, meanfield_potential(mf_end).values,
                               bohmian_potential(b_end).values]))
    centers = np.array(st["centers"])
    own = centers[np.argmin(np.abs(centers - X))]
    x_b = float(g.x[np.argmin(V_b.values)])
    minima = local_minima(V_mf, g)
    near = [float(np.min(np.abs(minima - c))) if minima.size else np.inf for c in centers]
    drift_mf = float(np.max(np.abs(np.diff(mf_rows[:, 1]))))
    drift_b = float(np.max(np.abs(np.diff(b_rows[:, 2]))))
    sig = st["sigma"]
    checks = [check("Bohmian potential minimum to the particle's packet centre", abs(x_b - own), sig,
                    abs(x_b - own) < sig),
              check("mean-field local minima", len(minima), len(centers), len(minima) == len(centers)),
              check("mean-field minima to packet centres (max)", max(near), sig, max(near) < sig),
              check("mean-field norm drift per step", drift_mf, 1e-10, drift_mf < 1e-10),
              check("Bohmian norm drift per step", drift_b, 1e-10, drift_b < 1e-10)]
    e = mf_rows[:, 2][np.isfinite(mf_rows[:, 2])]
    summary = {"bohmian_minimum": x_b, "meanfield_minima": minima.tolist(),
               "energy_drift_relative": float(abs(e[-1] - e[0]) / abs(e[0])) if e.size > 1 and e[0] else 0.0}
    figures = [{"name": "potentials", "tables": ["potentials.csv", "potentials.csv"], "x": "x",
                "y": "V_meanfield", "series_y": ["V_meanfield", "V_bohmian"], "xlabel": "x", "ylabel": "V",
                "title": "gravitational potential by scheme", "highlight": [1], "viewport": None}]
    return {"checks": checks, "summary": summary, "figures": figures, "flags": {"bohmian": b_end.flags},
            "flagged_steps": int(bool(b_end.flags))}


# ---------------------------------------------------------------------------
# equivariance

def run_equivariance(cfg: ScenarioConfig, out: Path, threads: int) -> dict:
    g = Grid1D(*cfg["grid"]["x"])
    st, m, e = cfg["state"], cfg["particle"]["m"], cfg["ensemble"]
    policy = _policy(cfg)
    wf0 = normalize(WaveFunction1D(g, gaussian_packet(g.x, st["center"], st["sigma"], st["k"]).astype(complex), 0.0))
    nsteps = int(round(e["T"] / e["dt"]))
    dt = e["T"] / nsteps
    frames = propagate_frames(wf0, PotentialField.zeros(g), m, dt, nsteps)
    x0 = sample_density(wf0, e["count"], cfg.seed)

    def chunk(k):
        sl = slice(k, k + ENSEMBLE_CHUNK)
        _, pos, _, fl = rk4_ensemble(frames, x0[sl, None], 0.0, dt, nsteps, policy)
        return pos[-1, :, 0], fl

    parts = pmap(chunk, range(0, len(x0), ENSEMBLE_CHUNK), threads)
    xT = np.concatenate([q[0] for q in parts])
    fl = np.concatenate([q[1] for q in parts], axis=1)
    write_csv(out / "positions.csv", ["index", "x0", "xT"], np.column_stack([np.arange(len(x0)), x0, xT]))
    final = frames.wavefunction_at(frames.span[1])
    ks = ks_distance(xT, g, final.density)
    write_csv(out / "density.csv", ["x", "density0", "densityT"], np.column_stack([g.x, wf0.density, final.density]))
    checks = [check("KS distance at T", ks, 0.02, ks < 0.02)]
    figures = [{"name": "density", "tables": ["density.csv", "density.csv"], "x": "x", "y": "density0",
                "series_y": ["density0", "densityT"], "xlabel": "x", "ylabel": "|ψ|²",
                "title": "initial and final density", "highlight": [1], "viewport": None}]
    flagged = int(np.count_nonzero(fl))
    return {"checks": checks, "summary": {"ks": ks, "ks_initial": ks_distance(x0, g, wf0.density)},
            "figures": figures, "flags": {"ensemble": flagged}, "flagged_steps": flagged}


RUNNERS = {"minisuperspace": run_minisuperspace, "two-particle": run_two_particle,
           "schroedinger-newton": run_schroedinger_newton, "equivariance": run_equivariance}
