"""Two-particle semi-classical schemes and Schroedinger-Newton dynamics."""
import numpy as np
import pytest

from bohmsemi.errors import ZeroNorm
from bohmsemi.grid import Grid1D, Grid2D, WaveFunction1D, WaveFunction2D, gaussian_packet, normalize
from bohmsemi.newton import (SNState, bohmian_potential, local_minima, meanfield_energy, meanfield_potential,
                             run_sn)
from bohmsemi.semiclassical import (BohmianSCState, MeanFieldState, bilinear, bohmian_sc_step,
                                    conditional_wavefunction, harmonic, interaction_term, meanfield_energy as
                                    mf_energy, meanfield_step, run_bohmian_sc, run_meanfield, splitting_state,
                                    uncoupled)


def product_state(s2=0.5):
    g = Grid2D(Grid1D.centered(10, 201), Grid1D.centered(3, 121))
    a, b = g.mesh()
    psi = gaussian_packet(a, 0.5, 1.0, 1.0) * gaussian_packet(b, 0.0, s2)
    return g, WaveFunction2D(g, psi)


def test_conditional_wavefunction_of_product():
    g, wf = product_state()
    chi, norm = conditional_wavefunction(wf, 0.0)
    ref = gaussian_packet(g.axis1.x, 0.5, 1.0, 1.0)
    assert np.max(np.abs(chi.psi - ref)) < 1e-10
    # [DERIVED] slice norm = g(0) = (2 pi s^2)^(-1/4)
    assert norm == pytest.approx((2 * np.pi * 0.25) ** -0.25, rel=1e-10)
    with pytest.raises(ValueError):
        conditional_wavefunction(wf, 5.0)


def test_conditional_wavefunction_zero_slice():
    g = Grid2D(Grid1D.centered(5, 51), Grid1D.centered(5, 51))
    a, b = g.mesh()
    wf = WaveFunction2D(g, (b * np.exp(-a**2 - b**2)).astype(complex))
    with pytest.raises(ZeroNorm):
        conditional_wavefunction(wf, 0.0)


def test_interaction_term_product_state():
    # [DERIVED] at the centre of a Gaussian g(x2): I = -g''/(2 m2 g) chi, which
    # is chi / (4 m2 s^2); the nested central difference sees g'' through a
    # stencil of width 2 dx, giving the discrete value used below
    g, wf = product_state(0.5)
    h2 = 2 * g.axis2.dx
    g2 = (2 * np.exp(-h2**2 / (4 * 0.25)) - 2) / h2**2
    I10, r10 = interaction_term(wf, 0.5, 0.0, 10.0)
    _, r100 = interaction_term(wf, 0.5, 0.0, 100.0)
    chi, norm = conditional_wavefunction(wf, 0.0)
    bulk = np.abs(chi.psi) > 1e-3
    assert np.allclose(I10[bulk] / (chi.psi[bulk] * norm), -g2 / (2 * 10.0), rtol=1e-9)
    assert -g2 / (2 * 10.0) == pytest.approx(1 / (4 * 10.0 * 0.25), rel=1e-2)
    assert r10 / r100 == pytest.approx(10.0, rel=1e-10)


def test_couplings():
    V = bilinear(0.5)
    assert V.V(2.0, 3.0) == 3.0 and V.dV2(2.0, 3.0) == 1.0
    H = harmonic(2.0, 1.0, 1.0)
    assert H.V(1.0, 0.0) == pytest.approx(1.5) and H.dV2(1.0, 0.0) == pytest.approx(-2.0)


def test_uncoupled_classical_motion():
    # with no coupling both schemes move particle 2 freely
    g = Grid1D.centered(15, 301)
    chi = WaveFunction1D(g, gaussian_packet(g.x, 0.0, 1.0, 1.0))
    V = uncoupled()
    _, mf = run_meanfield(MeanFieldState(chi, 0.2, 0.3), V, 1.0, 3.0, 0.05, 40)
    _, bs = run_bohmian_sc(BohmianSCState(chi.copy(), 0.0, 0.2, 0.3), V, 1.0, 3.0, 0.05, 40)
    expect = 0.2 + 0.1 * mf["t"]
    assert np.allclose(mf["X2"], expect, atol=1e-12) and np.allclose(bs["X2"], expect, atol=1e-12)
    # the quantum particle rides the packet centre at speed k/m = 1; the
    # grid dispersion at dx = 0.1 costs a few parts in 1e3
    assert bs["X1"][-1] == pytest.approx(2.0, abs=1e-2)


def test_meanfield_energy_conserved_harmonic():
    g = Grid1D.centered(15, 601)
    chi = WaveFunction1D(g, gaussian_packet(g.x, 1.0, 0.8))
    V = harmonic(1.0)
    s = MeanFieldState(chi, -0.5, 0.0)
    e0 = mf_energy(s, V, 1.0, 5.0)
    for _ in range(200):
        s = meanfield_step(s, V, 1.0, 5.0, 0.01)
    assert abs(mf_energy(s, V, 1.0, 5.0) - e0) < 1e-4 * abs(e0)
    assert abs(s.chi.norm2() - 1) < 1e-12


def test_step_rejects_bad_dt():
    g = Grid1D.centered(5, 51)
    chi = WaveFunction1D(g, gaussian_packet(g.x))
    with pytest.raises(ValueError):
        meanfield_step(MeanFieldState(chi, 0, 0), bilinear(1.0), 1, 1, 0.0)
    with pytest.raises(ValueError):
        bohmian_sc_step(BohmianSCState(chi, 0, 0, 0), bilinear(1.0), 1, 1, -0.1)


def test_splitting_state_normalized_and_symmetric():
    g = Grid2D(Grid1D.centered(20, 201), Grid1D.centered(3, 61))
    wf = splitting_state(g)
    assert wf.norm2() == pytest.approx(1.0, abs=1e-12)
    d = wf.density
    assert np.allclose(d, d[::-1, :], atol=1e-12)


# ---------------------------------------------------------------------------
# Schroedinger-Newton

def sn_state(X=-5.0):
    g = Grid1D.centered(20, 401)
    wf = normalize(WaveFunction1D(g, gaussian_packet(g.x, -5, 1.0) + gaussian_packet(g.x, 5, 1.0)))
    return SNState(wf, X, 0.0, 1.0, 1.0, 0.1)


def test_bohmian_potential_closed_form():
    s = sn_state()
    V = bohmian_potential(s)
    x = s.psi.grid.x
    assert np.allclose(V.values, -1.0 / np.sqrt((x + 5) ** 2 + 0.01))
    assert x[np.argmin(V.values)] == pytest.approx(-5.0)


def test_meanfield_potential_far_field_and_minima():
    s = sn_state()
    V = meanfield_potential(s)
    x = s.psi.grid.x
    # [DERIVED] far away each half-mass packet looks like a point mass, up to
    # corrections of order (sigma / distance)^2
    far = -0.5 / abs(x[0] - 5) - 0.5 / abs(x[0] + 5)
    assert V.values[0] == pytest.approx(far, rel=1e-2)
    mins = local_minima(V, s.psi.grid)
    assert len(mins) == 2 and np.allclose(np.sort(mins), [-5, 5], atol=0.1)
    assert np.allclose(V.values, V.values[::-1], atol=1e-12)


def test_sn_norm_and_energy():
    s = sn_state()
    e0 = meanfield_energy(s)
    end, rec = run_sn(s, 0.01, 50, bohmian=False)
    assert np.max(np.abs(np.diff(rec["norm"]))) < 1e-10
    assert abs(meanfield_energy(end) - e0) < 1e-3 * abs(e0)
    endb, recb = run_sn(s, 0.01, 50, bohmian=True)
    assert np.max(np.abs(np.diff(recb["norm"]))) < 1e-10
    assert recb["X"][-1] < 0


def test_sn_state_validation():
    with pytest.raises(ValueError):
        SNState(sn_state().psi, eps_soft=0.0)
