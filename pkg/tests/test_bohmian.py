"""Guidance velocity, quantum potential, interpolation and trajectory integration."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bohmsemi.bohmian import (CLAMPED, NODE, AnalyticState1D, Frames, NodePolicy, TrajectoryRecord,
                              advance_trajectory, equivariance_test, interp_cubic_1d, interp_cubic_2d,
                              newton_residual, probability_current, propagate_frames, quantum_potential,
                              rk4_ensemble, velocity_at, velocity_on_grid)
from bohmsemi.errors import FrameGap, OutOfDomain
from bohmsemi.grid import Grid1D, Grid2D, PotentialField, WaveFunction1D, WaveFunction2D, gaussian_packet


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-0.9, 0.9))
def test_cubic_interpolation_exact_for_cubics(c, x):
    g = Grid1D(-1.0, 1.0, 21)
    f = lambda t: c[0] + c[1] * t + c[2] * t**2 + c[3] * t**3
    assert float(interp_cubic_1d(g, f(g.x), x)) == pytest.approx(f(x), abs=1e-10)


def test_cubic_interpolation_2d_bicubic():
    g = Grid2D(Grid1D(-1, 1, 21), Grid1D(0, 2, 11))
    a, b = g.mesh()
    vals = a**3 * b**2 - 2 * a * b + 1
    assert float(interp_cubic_2d(g, vals, 0.33, 1.27)) == pytest.approx(0.33**3 * 1.27**2 - 2 * 0.33 * 1.27 + 1,
                                                                        abs=1e-12)


def test_plane_wave_velocity():
    # [DERIVED] psi = exp(i k x) guides at v = k/m everywhere; central
    # differences shrink k by the factor sin(k dx)/(k dx)
    g = Grid1D.centered(10, 1001)
    wf = WaveFunction1D(g, np.exp(1.5j * g.x))
    expect = np.sin(1.5 * g.dx) / g.dx / 2.0
    assert velocity_at(wf, np.array([0.2, -3.1]), 2.0) == pytest.approx([expect, expect], abs=1e-8)
    assert np.allclose(velocity_on_grid(wf, 2.0)[1:-1], expect, atol=1e-8)
    assert np.allclose(probability_current(wf, 2.0)[1:-1], expect, atol=1e-8)
    assert expect == pytest.approx(0.75, rel=2e-4)


def test_velocity_out_of_domain():
    g = Grid1D.centered(5, 101)
    wf = WaveFunction1D(g, gaussian_packet(g.x))
    with pytest.raises(OutOfDomain):
        velocity_at(wf, 6.0)


def test_node_clamp_flags():
    # psi = x has a node at 0; the raw velocity there is undefined
    g = Grid1D.centered(1, 201)
    wf = WaveFunction1D(g, (g.x + 0.3j * g.x**2).astype(complex))
    v, flag = velocity_at(wf, np.array([0.0, 0.5]), 1.0, NodePolicy(1e-12, 10.0), return_flags=True)
    assert flag[0] and not flag[1]
    assert np.all(np.isfinite(v)) and abs(v[0]) <= 10.0


def test_quantum_potential_gaussian():
    # [DERIVED] R = exp(-x^2/4 s^2) gives Q = -(1/2m)(x^2/4s^4 - 1/2s^2)
    s, m = 1.3, 2.0
    g = Grid1D.centered(10, int(20 / (s / 50)) + 1)
    wf = WaveFunction1D(g, gaussian_packet(g.x, 0.0, s, 0.8))
    Q = quantum_potential(wf, m)
    ref = -0.5 / m * (g.x**2 / (4 * s**4) - 1 / (2 * s**2))
    v = Q.valid
    assert v.sum() > 0.5 * g.n
    assert np.max(np.abs(Q.values[v] - ref[v]) / np.abs(ref[v])) < 1e-6
    assert not v[0] and not v[-1]


def test_quantum_potential_plane_wave():
    g = Grid1D.centered(10, 501)
    Q = quantum_potential(WaveFunction1D(g, np.exp(3j * g.x)))
    assert np.nanmax(np.abs(Q.values)) < 1e-10


def test_rk4_on_analytic_plane_wave():
    st_ = AnalyticState1D(lambda x, t: np.exp(2j * x), lambda x, t: 2j * np.exp(2j * x), m=1.0)
    rec = advance_trajectory(st_, 0.5, 0.01, t_span=(0.0, 1.0))
    assert rec.positions[-1, 0] == pytest.approx(2.5, abs=1e-12)
    assert rec.flag_counts()["node"] == 0


def test_frames_spreading_gaussian_trajectory():
    # [DERIVED] x(t) = x0 sqrt(1 + t^2/(4 m^2 s^4)) for a resting packet
    g = Grid1D.centered(30, 3001)
    wf = WaveFunction1D(g, gaussian_packet(g.x, 0.0, 1.0).astype(complex))
    frames = propagate_frames(wf, PotentialField.zeros(g), 1.0, 0.01, 200, stride=1)
    rec = advance_trajectory(frames, 1.2, 0.01)
    assert rec.positions[-1, 0] == pytest.approx(1.2 * np.sqrt(2.0), rel=1e-4)
    with pytest.raises(FrameGap):
        advance_trajectory(frames, 1.2, 0.01, t_span=(0.0, 3.0))


def test_wall_clamp_flag():
    st_ = AnalyticState1D(lambda x, t: np.exp(5j * x), lambda x, t: 5j * np.exp(5j * x), domain=(-1.0, 1.0))
    _, pos, _, flags = rk4_ensemble(st_, np.array([[0.9]]), 0.0, 0.1, 3)
    assert np.all(pos <= 1.0) and np.any(flags & CLAMPED)


def test_trajectory_record_validation():
    with pytest.raises(ValueError):
        TrajectoryRecord(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2), np.zeros(2))


def test_equivariance_small_ensemble():
    g = Grid1D.centered(15, 601)
    wf = WaveFunction1D(g, gaussian_packet(g.x, 0.0, 1.0, 0.5).astype(complex))
    ks, det = equivariance_test(wf, PotentialField.zeros(g), 1.0, 2000, 2.0, seed=5, return_details=True)
    assert ks < 0.04 and det["ks_initial"] < 0.04


def test_newton_residual_in_harmonic_trap():
    # coherent state in a trap: the packet moves rigidly, so the trajectory
    # obeys m x'' = -V' - Q' with a non-zero quantum force
    g = Grid1D.centered(12, 1201)
    V = PotentialField(0.5 * g.x**2)
    wf = WaveFunction1D(g, gaussian_packet(g.x, 1.0, np.sqrt(0.5)).astype(complex))
    frames = propagate_frames(wf, V, 1.0, 0.01, 100)
    rec = advance_trajectory(frames, 1.3, 0.01)
    res = newton_residual(rec, frames, V)
    assert res.max_ratio() < 1e-2
    assert np.max(np.abs(res.quantum_force)) > 0.1


def test_two_dimensional_product_velocity():
    g = Grid2D(Grid1D.centered(6, 121), Grid1D.centered(6, 121))
    a, b = g.mesh()
    wf = WaveFunction2D(g, np.exp(1j * (1.0 * a - 2.0 * b)))
    v = velocity_at(wf, np.array([0.3, -0.4]), (1.0, 4.0))
    dx = g.axis1.dx
    assert v == pytest.approx([np.sin(dx) / dx, -np.sin(2 * dx) / dx / 4.0], abs=1e-8)
