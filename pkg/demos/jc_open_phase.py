"""Atom and cavity mode with photon loss: the phase correction stays small at resonance.

Run: python3 demos/jc_open_phase.py
"""
import numpy as np

from geophase.jc import JCParams, delta_scan, open_gp_jc, unitary_gp_jc

print("closed system, one Rabi period")
for d in (0.0, 0.1, 2.0, 10.0):
    p = JCParams(Delta=d)
    print(f"  Delta/g = {d:5.1f}: phi_u = {unitary_gp_jc(p, p.period) / np.pi:+.6f} pi, "
          f"-(1 - cos theta_n) = {-(1 - p.cos_theta):+.6f}")

print("\nopen system at resonance, pump p = 0.005 g, after three periods")
for gamma in (0.01, 0.1, 0.25):
    p = JCParams(Delta=0.0, gamma=gamma, p=0.005)
    phi, delta = open_gp_jc(p, 3 * p.period)
    print(f"  gamma/g = {gamma:4.2f}: phi_g = {phi / np.pi:+.6f} pi, correction = {delta:+.2e}")

print("\ncorrection versus detuning at gamma = 0.1 g")
deltas = np.linspace(0.0, 1.5, 16)
for d, v in zip(deltas, delta_scan(deltas, gamma=0.1, pump=0.005)):
    print(f"  Delta/g = {d:4.2f}: {v:+.5f}")
