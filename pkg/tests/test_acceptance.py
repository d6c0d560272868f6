"""Acceptance suite: one test per criterion, each at its stated tolerance and time budget.

A PASS/FAIL line per criterion is printed in the terminal summary (see
conftest.py). Runtime limits are measured with perf_counter around the work
that the criterion describes.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from bohmsemi import cli
from bohmsemi import minisuperspace as ms
from bohmsemi.bohmian import quantum_potential
from bohmsemi.config import load_config
from bohmsemi.grid import (Grid1D, Grid2D, WaveFunction1D, WaveFunction2D, free_width, gaussian_packet)
from bohmsemi.io import emit_figures, read_csv
from bohmsemi.propagate import CrankNicolson1D, CrankNicolson2D
from bohmsemi.semiclassical import bilinear, splitting_state

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_cli(name, out, threads=1, plots=False):
    args = ["run", str(CONFIGS / f"{name}.toml"), "--out", str(out), "--threads", str(threads)]
    if plots:
        args.append("--plots")
    status = cli.main(args)
    return status, json.loads((out / "manifest.json").read_text())


def checks_of(manifest):
    return {c["name"]: c for c in manifest["checks"]}


# 1 -------------------------------------------------------------------------

def test_c01_classical_lines(verdict):
    t0 = time.perf_counter()
    drifts = {}
    for mode, sign in (("R", 1), ("L", -1)):
        p = ms.WDWParams(1.0, 5.0, 1.0, mode)
        phi0 = np.linspace(-3.0, 3.0, 5)
        t, pos, vel, fl = ms.integrate_wdw_ensemble(p, phi0, np.full(5, -4.0), (0.0, 20.0), 0.02)
        c = pos[..., 1] - sign * pos[..., 0]
        drifts[mode] = float(np.max(np.abs(c - c[0])) / 20.0)
    elapsed = time.perf_counter() - t0
    ok = max(drifts.values()) < 1e-9 and elapsed < 1.0
    verdict(1, "alpha -/+ phi conserved for modes R and L", ok,
            f"drift R {drifts['R']:.1e}, L {drifts['L']:.1e} per unit tau; {elapsed:.2f} s")
    assert ok


# 2 -------------------------------------------------------------------------

def test_c02_usual_semiclassical_values(verdict):
    t0 = time.perf_counter()
    p = ms.WDWParams(1.0, 5.0, 1.0, "superposition")
    alpha0 = -8.0 * p.sigma
    closed = {"R": 1 + 0.25, "L": 25 + 0.25, "superposition": 13 + 0.25}
    errs = {k: abs(ms.two_energy_quadrature(p, alpha0, 0.0, k) / v - 1) for k, v in closed.items()}
    ap = ms.usual_sc_run(p, alpha0, 0.0, (0.0, 1.0), 0.1).alpha_prime
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-3 and abs(ap - np.sqrt(13.25)) < 1e-12 and elapsed < 1.0
    verdict(2, "2<H_M> quadrature vs closed forms; alpha' = sqrt(13.25)", ok,
            f"max rel err {max(errs.values()):.1e}; alpha' {ap:.6f}; {elapsed:.2f} s")
    assert ok


# 3 -------------------------------------------------------------------------

def test_c03_scheme_comparison(verdict):
    cfg = load_config(CONFIGS / "scheme_comparison.toml")
    c, pk = cfg["compare"], cfg["packet"]
    p = ms.WDWParams(pk["u"], pk["v"], pk["sigma"], pk["mode"])
    t0 = time.perf_counter()
    tab = ms.compare_schemes(p, c["alpha0"], c["phi0"], c["tau0"], (c["tau0"], c["tau_end"]), c["dtau"],
                             tuple(c["early"]), tuple(c["late"]))
    elapsed = time.perf_counter() - t0
    a = tab.asymptotic
    near = lambda x, ref: abs(x - ref) <= 0.1 * ref
    asym = (near(a["full_early"], p.u) and near(a["full_late"], p.v)
            and near(a["bohmian_early"], p.u) and near(a["bohmian_late"], p.v))
    usual = bool(np.all(np.abs(tab.usual["alpha_prime"] - 3.640) <= 1e-3))
    rms = tab.rms["bohmian_early"] < tab.rms["usual_early"] and tab.rms["bohmian_late"] < tab.rms["usual_late"]
    ok = asym and usual and rms and elapsed < 10.0
    verdict(3, "full and Bohmian-SC follow u then v; usual-SC stays at 3.640", ok,
            f"full {a['full_early']:.3f}->{a['full_late']:.3f}, bohmSC {a['bohmian_early']:.3f}->"
            f"{a['bohmian_late']:.3f}, usual {tab.usual['alpha_prime'][0]:.4f}; RMS bohmSC "
            f"{tab.rms['bohmian_early']:.3f}/{tab.rms['bohmian_late']:.1e} vs usual "
            f"{tab.rms['usual_early']:.3f}/{tab.rms['usual_late']:.3f}; {elapsed:.2f} s")
    assert ok


# 4 -------------------------------------------------------------------------

def test_c04_no_crossing_and_transition(verdict):
    cfg = load_config(CONFIGS / "sc_ensemble.toml")
    sc, pk = cfg["semiclassical"], cfg["packet"]
    p = ms.WDWParams(pk["u"], pk["v"], pk["sigma"], pk["mode"])
    t0 = time.perf_counter()
    phi0 = ms.sample_sc_initial(p, sc["alpha0"], sc["tau0"], 100, cfg.seed)
    t, pos, vel, fl, raw = ms.bohmian_sc_ensemble(p, phi0, sc["alpha0"], sc["tau0"], (sc["tau0"], sc["tau_end"]),
                                                  sc["dtau"], sc["alpha_sign"])
    elapsed = time.perf_counter() - t0
    left = phi0 < 0
    changes, kept = ms.no_crossing_report(pos[..., 0], left)
    fp = np.abs(vel[..., 0][:, left])
    early = float(np.max(np.abs(fp[0] - p.u) / p.u))
    late = float(np.max(np.abs(fp[-1] - p.v) / p.v))
    ok = changes == 0 and kept and left.sum() > 0 and early < 0.05 and late < 0.05 and elapsed < 10.0
    verdict(4, "no side changes; left-starters go from |phi'| = u to v", ok,
            f"{len(phi0)} trajectories, {int(left.sum())} left, side changes {changes}, order kept {kept}, "
            f"u err {early:.1e}, v err {late:.1e}; {elapsed:.2f} s")
    assert ok


# 5 -------------------------------------------------------------------------

def test_c05_figure_reproduction(tmp_path, verdict):
    t0 = time.perf_counter()
    runs = {}
    for name in ("fig1_mode_R", "fig2_mode_L", "fig3_superposition", "fig4_cyclic"):
        out = tmp_path / name
        status, manifest = run_cli(name, out)
        assert status == 0
        svgs = emit_figures(out)
        runs[name] = (out, manifest, svgs)
    elapsed = time.perf_counter() - t0

    def slopes(out, manifest):
        res = []
        for i in range(len(manifest["summary"]["labels"])):
            cols, d = read_csv(out / f"trajectory_{i:03d}.csv")
            rec = ms.TrajectoryRecord(d[:, 0], d[:, 1:3], d[:, 3:5], d[:, -1].astype(int))
            res.append(ms.asymptotic_slopes(rec, 10.0))
        return np.array(res)

    out1, m1, _ = runs["fig1_mode_R"]
    out2, m2, _ = runs["fig2_mode_L"]
    out3, m3, _ = runs["fig3_superposition"]
    out4, m4, _ = runs["fig4_cyclic"]
    s1, s2, s3 = slopes(out1, m1), slopes(out2, m2), slopes(out3, m3)
    fig1 = set(m1["summary"]["labels"]) == {"left->right"} and np.allclose(s1, 1.0, atol=1e-9)
    fig2 = set(m2["summary"]["labels"]) == {"right->left"} and np.allclose(s2[:, 0], -1.0, atol=1e-9)
    # transitions: trajectories that start on slope +1 and end on slope -1
    transitions = int(np.sum((np.abs(s3[:, 0] - 1) < 1e-3) & (np.abs(s3[:, 1] + 1) < 1e-3)))
    counts3 = m3["summary"]["label_counts"]
    cyclic = m4["summary"]["label_counts"].get("cyclic", 0)
    svg_ok = all(len(v[2]) == 1 and v[2][0].read_text().count("<polyline") == len(v[1]["summary"]["labels"])
                 for v in runs.values())
    ok = fig1 and fig2 and transitions >= 1 and cyclic >= 1 and svg_ok and elapsed < 30.0
    verdict(5, "figure families: +1 lines, -1 lines, transitions, cyclic", ok,
            f"fig1 {m1['summary']['label_counts']}, fig2 {m2['summary']['label_counts']}, fig3 {counts3} "
            f"({transitions} transitions), fig4 cyclic {cyclic}; {elapsed:.2f} s")
    assert ok


# 6 -------------------------------------------------------------------------

def test_c06_equivariance(tmp_path, verdict):
    t0 = time.perf_counter()
    status, manifest = run_cli("equivariance", tmp_path / "eq")
    elapsed = time.perf_counter() - t0
    ks = manifest["summary"]["ks"]
    cfg = manifest["config"]
    ok = (status == 0 and cfg["ensemble"]["count"] == 10000
          and cfg["ensemble"]["T"] == 2 * cfg["particle"]["m"] * cfg["state"]["sigma"] ** 2
          and ks < 0.02 and elapsed < 30.0)
    verdict(6, "equivariance of 10^4 trajectories at T = 2 m sigma^2", ok, f"KS {ks:.4f}; {elapsed:.2f} s")
    assert ok


# 7 -------------------------------------------------------------------------

def test_c07_quantum_potential(verdict):
    s, m = 1.0, 1.0
    g = Grid1D(-12.0, 12.0, int(24 / (s / 50)) + 1)
    wf = WaveFunction1D(g, gaussian_packet(g.x, 0.0, s, 1.0))
    Q = quantum_potential(wf, m)
    ref = -0.5 / m * (g.x**2 / (4 * s**4) - 1 / (2 * s**2))
    v = Q.valid & (np.abs(ref) > 1e-8)
    rel = float(np.max(np.abs(Q.values[v] - ref[v]) / np.abs(ref[v])))
    plane = float(np.nanmax(np.abs(quantum_potential(WaveFunction1D(g, np.exp(2j * g.x))).values)))
    ok = rel < 1e-6 and plane < 1e-10 and v.sum() > g.n // 2
    verdict(7, "quantum potential of a Gaussian and a plane wave", ok,
            f"Gaussian rel err {rel:.1e} on {int(v.sum())} cells; plane wave {plane:.1e}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_c08_propagator_oracles(verdict):
    g = Grid1D.centered(40, 4001)
    cn = CrankNicolson1D(g, 1.0)
    w = g.weights()
    norm = lambda psi: float(np.sum(w * np.abs(psi) ** 2))

    def evolve(dt, T=2.0, track=False):
        psi = gaussian_packet(g.x, 0.0, 1.0, 1.0).astype(complex)
        V = np.zeros(g.n)
        drift, n_prev = 0.0, norm(psi)
        for _ in range(int(round(T / dt))):
            psi = cn.step_array(psi, V, dt)
            if track:
                n = norm(psi)
                drift, n_prev = max(drift, abs(n - n_prev)), n
        return psi, drift

    a, drift1 = evolve(0.04, track=True)
    b, _ = evolve(0.02)
    c, _ = evolve(0.01)
    ratio = np.sqrt(norm(a - b) / norm(b - c))
    d = np.abs(c) ** 2
    mu = np.sum(w * d * g.x)
    width = np.sqrt(np.sum(w * d * (g.x - mu) ** 2))
    width_err = abs(width / free_width(2.0) - 1)

    g2 = Grid2D(Grid1D.centered(30, 256), Grid1D.centered(4, 128))
    wf2 = splitting_state(g2)
    prop = CrankNicolson2D(g2, 1.0, 100.0)
    V2 = bilinear(0.05).on_grid(g2).values
    psi2, drift2 = wf2.psi, 0.0
    for _ in range(20):
        new = prop.step_array(psi2, V2, 0.02)
        drift2 = max(drift2, abs(WaveFunction2D(g2, new).norm2() - WaveFunction2D(g2, psi2).norm2()))
        psi2 = new
    ok = width_err < 1e-3 and drift1 < 1e-12 and drift2 < 1e-10 and 3.5 <= ratio <= 4.5
    verdict(8, "width law, norm drift 1D/2D, second-order convergence", ok,
            f"width err {width_err:.1e}, drift 1D {drift1:.1e}, 2D {drift2:.1e}, dt-halving ratio {ratio:.3f}")
    assert ok


# 9 -------------------------------------------------------------------------

@pytest.mark.slow
def test_c09_two_particle_ordering(tmp_path, verdict):
    cfg = load_config(CONFIGS / "two_particle_split.toml")
    n1, n2 = cfg["grid"]["x1"][2], cfg["grid"]["x2"][2]
    t0 = time.perf_counter()
    status, manifest = run_cli("two_particle_split", tmp_path / "tp", threads=4)
    elapsed = time.perf_counter() - t0
    s = manifest["summary"]
    sweep = [s["sweep"][k] for k in sorted(s["sweep"], key=float)]
    masses = sorted(float(k) / cfg["particles"]["m1"] for k in s["sweep"])
    mono = all(b < a for a, b in zip(sweep, sweep[1:]))
    ok = (status == 0 and s["err_bohmian_sc"] < s["err_meanfield"] and mono and masses == [10.0, 100.0, 1000.0]
          and max(n1, n2) <= 256 and elapsed < 300.0)
    verdict(9, "err(BohmianSC) < err(meanfield); interaction ratio falls with m2/m1", ok,
            f"err bohmSC {s['err_bohmian_sc']:.2e} vs meanfield {s['err_meanfield']:.2e}; ratio "
            + ", ".join(f"{m:g}: {r:.3g}" for m, r in zip(masses, sweep)) + f"; grid {n1}x{n2}; {elapsed:.1f} s")
    assert ok


# 10 ------------------------------------------------------------------------

def test_c10_schroedinger_newton(tmp_path, verdict):
    t0 = time.perf_counter()
    status, manifest = run_cli("schroedinger_newton", tmp_path / "sn")
    elapsed = time.perf_counter() - t0
    cfg = manifest["config"]
    centers, sig = cfg["state"]["centers"], cfg["state"]["sigma"]
    s = manifest["summary"]
    c = checks_of(manifest)
    left = min(centers)
    bohm_ok = abs(s["bohmian_minimum"] - left) < sig and cfg["particle"]["X"] == left
    mins = s["meanfield_minima"]
    mf_ok = len(mins) == 2 and all(min(abs(m - x) for m in mins) < sig for x in centers)
    norms = (c["mean-field norm drift per step"]["value"], c["Bohmian norm drift per step"]["value"])
    ok = (status == 0 and abs(centers[1] - centers[0]) == 10 * sig and bohm_ok and mf_ok
          and max(norms) < 1e-10 and elapsed < 30.0)
    verdict(10, "Bohmian-SN one minimum, mean-field two; norms conserved", ok,
            f"Bohmian min {s['bohmian_minimum']:.3f}, mean-field minima {mins}, norm drift "
            f"{norms[0]:.1e}/{norms[1]:.1e}; {elapsed:.2f} s")
    assert ok


# 11 ------------------------------------------------------------------------

DETERMINISM_CASES = {
    "fig3_superposition": None,
    "sc_ensemble": None,
    "equivariance": None,
    "schroedinger_newton": None,
    "two_particle_small": """
kind = "two-particle"
seed = 0
[grid]
x1 = [-20.0, 20.0, 96]
x2 = [-3.0, 3.0, 48]
[particles]
m2 = 50.0
[coupling]
[state]
[integrator]
dt = 0.02
steps = 40
stride = 20
[node]
[sweep]
m2 = [10.0, 100.0]
""",
}


@pytest.mark.slow
def test_c11_determinism_across_threads(tmp_path, verdict):
    mismatches, compared = [], 0
    for name, text in DETERMINISM_CASES.items():
        src = CONFIGS / f"{name}.toml"
        if text is not None:
            src = tmp_path / f"{name}.toml"
            src.write_text(text)
        outs = []
        for threads in (1, 2, 8):
            out = tmp_path / f"{name}_{threads}"
            assert cli.main(["run", str(src), "--out", str(out), "--threads", str(threads)]) == 0
            outs.append(out)
        for f in sorted(p.name for p in outs[0].glob("*.csv")):
            compared += 1
            ref = (outs[0] / f).read_bytes()
            if any((o / f).read_bytes() != ref for o in outs[1:]):
                mismatches.append(f"{name}/{f}")
    ok = not mismatches and compared > 0
    verdict(11, "byte-identical CSVs for 1, 2 and 8 threads", ok,
            f"{compared} CSV files in {len(DETERMINISM_CASES)} scenarios, {len(mismatches)} differ")
    assert ok, mismatches
