"""Two qubits sharing a vacuum, with and without a mirror: coherence lifetime and entanglement.

Run: python3 demos/qubit_pair_mirror.py
"""
import warnings

import numpy as np

from geophase.bipartite import (BipartiteEnvSpec, coherence_decay_time, concurrence,
                                concurrence_crossings, evolve_bipartite, open_gp_bipartite)

L = 7.811  # pair separation in units of c/omega
free = BipartiteEnvSpec(gamma0=0.01, L_tilde=L)
print(f"free space: |rho41| falls below e^-2 at t = {coherence_decay_time(free):.1f}/omega")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # parallel dipoles close to the mirror give an indefinite rate matrix
    for ratio in (0.5, 1.0, 2.0):
        d_tilde = 2 * ratio * L
        par = BipartiteEnvSpec(gamma0=0.01, L_tilde=L, d_tilde=d_tilde, pol1=(1, 0, 0), pol2=(1, 0, 0))
        perp = BipartiteEnvSpec(gamma0=0.01, L_tilde=L, d_tilde=d_tilde, pol1=(0, 1, 0), pol2=(0, 1, 0))
        print(f"mirror at d = {ratio}L: parallel {coherence_decay_time(par):.1f}, "
              f"perpendicular {coherence_decay_time(perp):.1f}")

theta0 = 0.5
env = BipartiteEnvSpec(gamma0=0.05, L_tilde=L)
times = concurrence_crossings(env, theta0, 60.0)
print(f"\nconcurrence of cos(0.5)|ee> + sin(0.5)|gg> vanishes at t = {np.round(times, 3).tolist()}")
for t in (0.0, 5.0, 20.0):
    print(f"  C({t:4.1f}) = {concurrence(evolve_bipartite(env, theta0, [t])[0], x_state=True):.4f}")

print("\nphase correction after one period in free space")
for g0 in (1e-4, 1e-3, 1e-2):
    delta = open_gp_bipartite(BipartiteEnvSpec(gamma0=g0, L_tilde=L), np.pi / 2, 2 * np.pi)[1]
    print(f"  gamma0/omega = {g0:.0e}: {delta:+.4e} (first order {-4 * np.pi**2 / 3 * g0:+.4e})")
