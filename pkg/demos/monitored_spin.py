"""Monitored spin: trajectory phases, the echo histogram and the winding of the no-jump phase.

Runs a reduced ensemble (2000 trajectories) so it finishes in under a minute.
Run: python3 demos/monitored_spin.py
"""
import numpy as np

from geophase.phasefun import histogram_peaks
from geophase.spin import RotatingFieldParams
from geophase.trajectories import (JumpChannelSet, echo_ensemble, find_singularity, phase_ensemble,
                                   topo_scan, winding_difference)

theta = 0.34 * np.pi
p = RotatingFieldParams(Omega=5e-3, theta=theta)
ch = JumpChannelSet(Gamma=1e-3)

ens = phase_ensemble(p, ch, 2000, seed=7)
print(f"mean jumps per period {ens.mean_jumps:.3f} +- {ens.jump_error:.3f}")
for name, value in ens.references.items():
    print(f"  {name:7s} {value / np.pi:+.4f} pi")

echo = echo_ensemble(p, ch, 2000, seed=7)
d = echo.distribution
print("\necho histogram peaks (64 bins):")
for k in histogram_peaks(d):
    print(f"  {np.mod(d.bin_centers[k], 2 * np.pi) / np.pi:.4f} pi  weight {d.weights[k]:.3f}")

Om, G = find_singularity(theta)
print(f"\nno-jump return amplitude vanishes at Omega = {Om:.6e}, Gamma = {G:.6e}")
left, right = topo_scan(Omega=Om - 1e-6, Gamma=G), topo_scan(Omega=Om + 1e-6, Gamma=G)
print(f"winding numbers on either side: {left.n}, {right.n}; "
      f"Delta(pi) = {winding_difference(left, right):+.4f}")
print(f"adiabatic, undamped drive: n = {topo_scan(Omega=1e-4, Gamma=0.0).n}")
