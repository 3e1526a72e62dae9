"""Atom sliding above a lossy dielectric: decoherence, excitation above the critical velocity, friction.

Run: python3 demos/sliding_atom.py
"""

from geophase.sliding import (SlidingAtomSpec, decoherence_ratio_coefficient, decoherence_time,
                              friction_force, load_materials, steady_excited_population)

w0, G = 0.2, 1.0
print(f"omega0 = {w0}, Gamma = {G}; critical velocity {SlidingAtomSpec(w0, G).v_crit}")
for f in (0.0, 0.4, 0.8, 1.0, 1.5):
    print(f"  v = {f:3.1f} omega0: steady excited population {steady_excited_population(SlidingAtomSpec(w0, G, v=f * w0)):.3e}")

print("\ndecoherence time relative to the atom at rest")
for v in (0.0, 0.005, 0.01, 0.02):
    d = decoherence_time(SlidingAtomSpec(w0, G, v=v))
    print(f"  v = {v:5.3f}: numeric {d.ratio:.6f}")

nsi = load_materials()["nSi"]
for atom, index in (("Rb", 0), ("NV", 1)):
    c = decoherence_ratio_coefficient(nsi.omega0_tilde(atom, index), nsi.Gamma_tilde)
    print(f"small-velocity coefficient, {atom} over n-doped Si: {c:.4f}")

print("\nfriction force on a particle over an oscillator sheet")
for v in (0.05, 0.1, 0.2, 0.3):
    print(f"  v = {v:4.2f}: {friction_force(1.0, 1.0, 1.0, 1.0, v):.4e}")
