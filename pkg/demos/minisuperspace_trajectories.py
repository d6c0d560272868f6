"""
Trajectories of a mini-superspace universe
==========================================

The Wheeler-DeWitt equation (d_alpha^2 - d_phi^2) psi = 0 for the log scale
factor alpha and a massless scalar phi is solved by packets moving along
alpha = phi + c (psi_R) or alpha = -phi + c (psi_L). In a superposition the
Bohmian trajectories switch from one family to the other, and near the
origin some of them close on themselves. We also compare three ways of
computing the scale factor from a scalar-field packet.
"""

from pathlib import Path

import numpy as np

from bohmsemi import minisuperspace as ms
from bohmsemi.io import svg_lines

out = Path("demo_output")
out.mkdir(exist_ok=True)
p = ms.WDWParams(u=1.0, v=5.0, sigma=1.0, mode="superposition")

############################################################
# A fan of trajectories started far in the past, alpha = -12

phi0 = np.array([-14.0, -12.0, -10.0, 10.0, 12.0, 14.0])
t, pos, vel, flags = ms.integrate_wdw_ensemble(p, phi0, np.full(6, -12.0), (0.0, 20.0), 0.01)
for i in range(len(phi0)):
    rec = ms.TrajectoryRecord(t, pos[:, i], vel[:, i], flags[:, i])
    print(f"phi0 = {phi0[i]:+5.1f}: {ms.classify_trajectory(rec):14s} slopes {ms.asymptotic_slopes(rec)}")

############################################################
# Closed loops circle the stagnation points of the flow, e.g. near (1.376, 0.114)

t4, pos4, vel4, fl4 = ms.integrate_wdw_ensemble(p, [1.436], [0.114], (0.0, 3.0), 0.005)
loop = ms.TrajectoryRecord(t4, pos4[:, 0], vel4[:, 0], fl4[:, 0])
print("start (1.436, 0.114):", ms.classify_trajectory(loop))

series = [(pos[:, i, 0], pos[:, i, 1]) for i in range(len(phi0))] + [(pos4[:, 0, 0], pos4[:, 0, 1])]
(out / "minisuperspace.svg").write_text(svg_lines(series, [-30, 30, -13, 20], "φ", "α", "u = 1, v = 5", [6]))

############################################################
# Scale factor rate alpha' from the full theory, the usual semi-classical
# scheme (driven by <H>) and the Bohmian semi-classical scheme

tab = ms.compare_schemes(p, -40.0, -40.0, 0.0, (0.0, 80.0), 0.02, (6.0, 10.0), (60.0, 80.0))
for k in ("full", "usual", "bohmian"):
    print(f"{k:8s} alpha' early {tab.asymptotic[k + '_early']:.3f}  late {tab.asymptotic[k + '_late']:.3f}")
for end in ("early", "late"):
    print(f"RMS of alpha' against full ({end}): usual {tab.rms['usual_' + end]:.4f}  "
          f"bohmian {tab.rms['bohmian_' + end]:.4f}")
