"""Jaynes–Cummings atom–mode doublets with photon loss and incoherent pumping.

The open dynamics lives in the truncated basis
    0 = |-, 0>,  1 = |+, 0>,  2 = |-, 1>
(atom ground/excited, photon number). Rates and times are in units of g.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import BlockViolation, OrthogonalEndpoints
from .phasefun import kinematic_gp, wrap_phase
from .qcore import integrate_ode, track_branch

GROUND_VAC, EXCITED_VAC, GROUND_ONE = 0, 1, 2


@dataclass(frozen=True)
class JCParams:
    Delta: float = 0.0
    gamma: float = 0.0
    p: float = 0.0
    g: float = 1.0
    n: int = 0

    @property
    def rabi(self):
        """Doublet splitting Omega_n = sqrt(4 g² (n+1) + Delta²)."""
        return float(np.sqrt(4 * self.g**2 * (self.n + 1) + self.Delta**2))

    @property
    def cos_theta(self):
        return self.Delta / self.rabi

    @property
    def theta(self):
        return float(np.arccos(self.cos_theta))

    @property
    def period(self):
        return 2 * np.pi / self.rabi

    @property
    def regime(self):
        return "SC" if self.gamma / self.g < 1 else "WC"


def doublet_hamiltonian(p):
    """2x2 Hamiltonian on (|+, n>, |-, n+1>) measured from the doublet centre."""
    c = p.g * np.sqrt(p.n + 1)
    return np.array([[p.Delta / 2, c], [c, -p.Delta / 2]], dtype=complex)


def dressed_states(p):
    """(psi_plus, psi_minus, E_plus, E_minus) in the (|+, n>, |-, n+1>) basis."""
    half = p.theta / 2
    plus = np.array([np.cos(half), np.sin(half)], dtype=complex)
    minus = np.array([np.sin(half), -np.cos(half)], dtype=complex)
    return plus, minus, p.rabi / 2, -p.rabi / 2


def adiabatic_gp_jc(p, branch="+", convention="adiabatic"):
    """Adiabatic dressed-state phase.

    ``convention="adiabatic"`` returns +π(1 ∓ cosθ_n); ``"kinematic"`` returns the
    opposite sign, matching the orientation used by ``unitary_gp_jc``.
    """
    sign = {"+": 1.0, "-": -1.0}[branch]
    value = np.pi * (1 - sign * p.cos_theta)
    return value if convention == "adiabatic" else -value


def unitary_state_jc(p, t):
    """Closed-system state at time(s) ``t`` starting from |+, n>.

    Amplitudes use half angles: (cos²(θ/2) e^{-iEt} + sin²(θ/2) e^{iEt}) on |+, n>
    and -i sinθ sin(Et) on |-, n+1>.
    """
    t = np.asarray(t, dtype=float)
    e = p.rabi / 2
    c2, s2 = np.cos(p.theta / 2) ** 2, np.sin(p.theta / 2) ** 2
    a = c2 * np.exp(-1j * e * t) + s2 * np.exp(1j * e * t)
    b = -1j * np.sin(p.theta) * np.sin(e * t)
    return np.stack([a, b], axis=-1)


def unitary_gp_jc(p, t):
    """Kinematic phase of the closed evolution from |+, n> up to time ``t``."""
    ratio = (p.rabi - p.Delta) / (p.rabi + p.Delta)
    closing = 1 + np.exp(2j * np.pi * t / p.period) * ratio
    if abs(closing) < 1e-12:
        raise OrthogonalEndpoints("return amplitude vanishes")
    return wrap_phase(-np.pi * (1 - p.cos_theta) * t / p.period + np.angle(closing))


def _rhs(p):
    g, D, gam, pump = p.g, p.Delta, p.gamma, p.p

    def rhs(t, y):
        r00, r11, r22, r12 = y
        r21 = np.conj(r12)
        return np.array([
            -pump * r00 + gam * r22,
            -1j * g * (r21 - r12) + pump * r00,
            -1j * g * (r12 - r21) - gam * r22,
            -1j * g * (r22 - r11) - 1j * D * r12 - 0.5 * gam * r12,
        ])

    return rhs


def initial_excited_vacuum():
    rho = np.zeros((3, 3), dtype=complex)
    rho[EXCITED_VAC, EXCITED_VAC] = 1.0
    return rho


def lindblad_evolve_jc(p, rho0, t_samples, rtol=1e-10, atol=1e-12):
    """Density matrices (shape (len(t), 3, 3)) from the element-wise rate equations.

    Only the n = 0 doublet is coupled here; ``p.n`` must be 0.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if abs(rho0[0, 1]) > 1e-14 or abs(rho0[0, 2]) > 1e-14:
        raise BlockViolation("rho_01 and rho_02 must vanish initially")
    if p.n != 0:
        raise ValueError("the truncated open model covers the n = 0 doublet only")
    y0 = np.array([rho0[0, 0], rho0[1, 1], rho0[2, 2], rho0[1, 2]], dtype=complex)
    t_samples = np.asarray(t_samples, dtype=float)
    sol = integrate_ode(_rhs(p), y0, (t_samples[0], t_samples[-1]), t_samples, rtol=rtol, atol=atol)
    out = np.zeros((len(sol.t), 3, 3), dtype=complex)
    out[:, 0, 0] = sol.y[:, 0].real
    out[:, 1, 1] = sol.y[:, 1].real
    out[:, 2, 2] = sol.y[:, 2].real
    out[:, 1, 2] = sol.y[:, 3]
    out[:, 2, 1] = np.conj(sol.y[:, 3])
    return out


def lindblad_operators_jc(p):
    """Hamiltonian and rate-weighted jump operators reproducing the rate equations."""
    h = np.zeros((3, 3), dtype=complex)
    h[1:, 1:] = doublet_hamiltonian(replace(p, n=0))
    loss = np.zeros((3, 3), dtype=complex)
    loss[GROUND_VAC, GROUND_ONE] = np.sqrt(p.gamma)
    pump = np.zeros((3, 3), dtype=complex)
    pump[EXCITED_VAC, GROUND_VAC] = np.sqrt(p.p)
    return h, [loss, pump]


def tracked_plus_branch(rhos, times):
    """Eigenvector of the {|+,0>, |-,1>} block continuous with |+,0> at t = 0.

    Returns ``(eigenvalues, vectors embedded in the 3-level space)``.
    """
    blocks = [0.5 * (r[1:, 1:] + r[1:, 1:].conj().T) for r in rhos]
    _, vals, vecs = track_branch(list(zip(times, blocks)), np.array([1, 0], dtype=complex))
    full = np.zeros((len(times), 3), dtype=complex)
    full[:, 1:] = vecs
    return vals, full


def open_gp_jc(p, t, samples_per_period=3000):
    """Open-system phase from |+,0> up to ``t``; returns ``(phi_g, delta_phi)``.

    phi_g is the kinematic phase of the tracked eigenvector psi_plus(t) of rho(t);
    delta_phi = wrap(phi_g - phi_u) with phi_u the closed evolution at equal t.
    """
    n = int(max(2, np.ceil(samples_per_period * t / p.period)) + 1)
    times = np.linspace(0.0, t, n)
    rhos = lindblad_evolve_jc(p, initial_excited_vacuum(), times)
    _, vecs = tracked_plus_branch(rhos, times)
    phi_g = kinematic_gp(vecs)
    return phi_g, wrap_phase(phi_g - unitary_gp_jc(p, t))


def delta_scan(deltas, gamma, pump, periods=3.0, g=1.0):
    """delta_phi at t = periods·T for each detuning in ``deltas``."""
    out = []
    for d in deltas:
        prm = JCParams(Delta=float(d), gamma=gamma, p=pump, g=g)
        out.append(open_gp_jc(prm, periods * prm.period)[1])
    return np.array(out)
