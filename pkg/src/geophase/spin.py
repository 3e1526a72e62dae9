"""Spin-1/2 in a classical magnetic field of constant magnitude rotating about z.

H(t) = (omega/2) n(t)·sigma with n(t) = (sinθ cos φ(t), sinθ sin φ(t), cosθ) and
azimuth φ(t) = phase0 + direction·Omega·t. In the frame co-rotating with the
field the Hamiltonian is constant, which gives the exact propagator.
"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import OrthogonalEndpoints
from .phasefun import kinematic_gp, wrap_phase
from .qcore import SIGMA_X, SIGMA_Y, SIGMA_Z


@dataclass(frozen=True)
class RotatingFieldParams:
    Omega: float
    theta: float
    omega: float = 1.0
    direction: int = 1
    phase0: float = 0.0

    @property
    def omega_tilde(self):
        """Rabi frequency in the rotating frame."""
        c, s = np.cos(self.theta), np.sin(self.theta)
        return float(np.hypot(self.omega * c - self.direction * self.Omega, self.omega * s))

    @property
    def period(self):
        return 2 * np.pi / self.Omega

    def azimuth(self, t):
        return self.phase0 + self.direction * self.Omega * np.asarray(t, dtype=float)


def hamiltonian(p, t):
    phi = p.azimuth(t)
    s, c = np.sin(p.theta), np.cos(p.theta)
    return 0.5 * p.omega * (s * np.cos(phi) * SIGMA_X + s * np.sin(phi) * SIGMA_Y + c * SIGMA_Z)


def instantaneous_eigenstates(p, t):
    """(psi_plus, psi_minus, E_plus, E_minus) at time ``t``.

    For an array of times the states come back with shape (len(t), 2).
    """
    phase = np.exp(1j * p.azimuth(t))
    c, s = np.cos(p.theta / 2), np.sin(p.theta / 2)
    plus = np.stack(np.broadcast_arrays(c + 0j, s * phase), axis=-1)
    minus = np.stack(np.broadcast_arrays(s + 0j, -c * phase), axis=-1)
    return plus, minus, 0.5 * p.omega, -0.5 * p.omega


def berry_phase(theta, branch="+"):
    sign = {"+": 1.0, "-": -1.0}[branch]
    return -np.pi * (1 - sign * np.cos(theta))


def rotating_frame_hamiltonian(p):
    c, s = np.cos(p.theta), np.sin(p.theta)
    return 0.5 * ((p.omega * c - p.direction * p.Omega) * SIGMA_Z + p.omega * s * SIGMA_X)


def _frame(p, t):
    half = 0.5 * p.azimuth(t)
    return np.exp(-1j * half), np.exp(1j * half)


def propagate_exact(p, psi0, t, t0=0.0):
    """Exact state at time(s) ``t`` given ``psi0`` at ``t0``.

    The rotating-frame Hamiltonian is diagonalized once; its eigenvectors play
    the role of the rotating-frame basis and pick up exp(∓i omega_tilde t/2).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    t = np.asarray(t, dtype=float)
    vals, vecs = np.linalg.eigh(rotating_frame_hamiltonian(p))
    a0, b0 = _frame(p, t0)
    chi0 = np.array([psi0[0] / a0, psi0[1] / b0])
    coeff = vecs.conj().T @ chi0
    tau = (t - t0)[..., None]
    chi = (np.exp(-1j * vals * tau) * coeff) @ vecs.T
    a, b = _frame(p, t)
    return np.stack([a * chi[..., 0], b * chi[..., 1]], axis=-1)


def nonadiabatic_coefficients(p, t):
    """The amplitudes f(t) and g(t) of the closed-form evolution from psi_plus(0).

    psi(t) = exp(-iΩt/2)[(cos(ω̃t/2) + f) psi_plus(t) - g psi_minus(t)].
    g carries Omega·sinθ; that choice is what keeps the state normalized.
    """
    wt = p.omega_tilde
    sn = np.sin(wt * np.asarray(t, dtype=float) / 2)
    nu = p.omega - p.direction * p.Omega * np.cos(p.theta)
    f = -1j * sn * nu / wt
    g = -1j * sn * p.direction * p.Omega * np.sin(p.theta) / wt
    return f, g


def plus_state_closed_form(p, t):
    t = np.asarray(t, dtype=float)
    f, g = nonadiabatic_coefficients(p, t)
    plus, minus, _, _ = instantaneous_eigenstates(p, t)
    pref = np.exp(-1j * p.direction * p.Omega * t / 2)
    ca = pref * (np.cos(p.omega_tilde * t / 2) + f)
    cb = -pref * g
    return ca[..., None] * plus + cb[..., None] * minus


def total_phase_closed(p):
    """arg <psi_plus(0)|psi(T)> over one drive period, in (-pi, pi]."""
    wt, Om = p.omega_tilde, p.Omega
    nu = p.omega - Om * np.cos(p.theta)
    x = np.pi * wt / Om
    bracket = 1 - np.exp(2j * x) * (nu - wt) / (nu + wt)
    if abs(bracket) < 1e-12:
        raise OrthogonalEndpoints("return amplitude vanishes for these parameters")
    return wrap_phase(-np.pi - x + np.angle(bracket))


def dynamical_phase_closed(p):
    """Im ∫<psi|dpsi/dt> dt over one period, not reduced modulo 2π."""
    w, Om, wt = p.omega, p.Omega, p.omega_tilde
    x = 2 * np.pi * wt / Om
    return -np.pi * w / Om + np.pi * (w * Om / wt**2) * np.sin(p.theta) ** 2 * (1 - np.sin(x) / x)


def kinematic_gp_closed(p):
    """Closed-form geometric phase after one period 2π/Omega, starting from psi_plus(0)."""
    if p.direction != 1:
        p = replace(p, direction=1)
    return wrap_phase(total_phase_closed(p) - dynamical_phase_closed(p))


def nonadiabatic_expansion(theta, omega_ratio):
    """Leading adiabatic value plus the first-order correction -π sin²θ (Omega/omega)."""
    return -np.pi * (1 - np.cos(theta)) - np.pi * np.sin(theta) ** 2 * omega_ratio


def sample_period(p, n_samples=4001, periods=1.0):
    """States along ``periods`` drive periods starting from psi_plus(0)."""
    t = np.linspace(0.0, periods * p.period, n_samples)
    psi0 = instantaneous_eigenstates(p, 0.0)[0]
    return t, propagate_exact(p, psi0, t)


def state_speed_bound(p):
    """Upper bound on the Fubini-Study speed of states starting at psi_plus(0).

    The speed is the energy uncertainty (omega/2)|sin a| with a the angle between
    the Bloch vector and the field; in the rotating frame the state precesses on
    a cone around the axis of ``rotating_frame_hamiltonian``, so a ≤ 2α with α
    the angle between that axis and the field.
    """
    axis = np.array([p.omega * np.sin(p.theta), p.omega * np.cos(p.theta) - p.direction * p.Omega])
    field = np.array([np.sin(p.theta), np.cos(p.theta)])
    alpha = np.arccos(np.clip(axis @ field / max(np.linalg.norm(axis), 1e-300), -1, 1))
    return 0.5 * p.omega * np.sin(min(2 * alpha, np.pi / 2)) + p.Omega


def default_samples(p, step_phase=0.002, nutation_step=0.02):
    """Sample count bounding both the path length per step and the nutation angle per step.

    The nutation loops are small near the adiabatic limit but each one encloses
    area, so they must be resolved even when the path length is short. Their
    discretization error grows like (Omega/omega)·step², so the nutation step
    shrinks for fast drives.
    """
    nutation_step = min(nutation_step, np.sqrt(1e-6 * p.omega / max(p.Omega, 1e-300)))
    n_path = p.period * state_speed_bound(p) / step_phase
    n_nutation = p.period * p.omega_tilde / nutation_step
    return int(max(8001, np.ceil(max(n_path, n_nutation)) + 1))


def kinematic_gp_numeric(p, n_samples=None):
    """Geometric phase from sampled exact evolution over one period.

    The nutation about the rotating-frame axis runs at omega_tilde, so the grid
    must resolve it even when the drive itself is slow.
    """
    _, states = sample_period(p, n_samples or default_samples(p))
    return kinematic_gp(states)


def cyclic_state(p):
    """Initial state that returns to its own ray after one period, plus the AA phase.

    Picks the eigenvector of the one-period propagator with the larger overlap
    with psi_plus(0).
    """
    basis = np.eye(2, dtype=complex)
    U = np.stack([propagate_exact(p, basis[k], p.period) for k in range(2)], axis=1)
    vals, vecs = np.linalg.eig(U)
    plus0 = instantaneous_eigenstates(p, 0.0)[0]
    k = int(np.argmax(np.abs(vecs.conj().T @ plus0)))
    psi = vecs[:, k] / np.linalg.norm(vecs[:, k])
    t = np.linspace(0.0, p.period, 4001)
    return psi, kinematic_gp(propagate_exact(p, psi, t))


def echo_persistence_unitary(theta, adiabatic=True, Omega=1e-3, omega=1.0):
    """Persistence probability |<psi(0)|psi(2T)>|² of the two-cycle echo.

    The adiabatic branch returns cos²(2 φ_berry). Otherwise the protocol is
    simulated: equal superposition of the instantaneous eigenstates, one cycle,
    an instantaneous swap of the eigenstate amplitudes, then a second cycle with
    the rotation reversed and the field azimuth continuous.
    """
    if adiabatic:
        return float(np.cos(2 * berry_phase(theta, "+")) ** 2)
    psi_T, psi0 = echo_final_state(RotatingFieldParams(Omega=Omega, theta=theta, omega=omega))
    return float(abs(np.vdot(psi0, psi_T)) ** 2)


def swap_operator(p, t):
    plus, minus, _, _ = instantaneous_eigenstates(p, t)
    return np.outer(plus, minus.conj()) + np.outer(minus, plus.conj())


def reversed_params(p):
    """Parameters for the second echo cycle: opposite rotation, continuous azimuth."""
    t_mid = p.period
    back = replace(p, direction=-p.direction, phase0=0.0)
    # choose phase0 so that the azimuth at t_mid matches the forward cycle
    return replace(back, phase0=float(p.azimuth(t_mid) - back.direction * p.Omega * t_mid))


def echo_final_state(p):
    plus, minus, _, _ = instantaneous_eigenstates(p, 0.0)
    psi0 = (plus + minus) / np.sqrt(2)
    T = p.period
    psi = propagate_exact(p, psi0, T)
    psi = swap_operator(p, T) @ psi
    back = reversed_params(p)
    psi = propagate_exact(back, psi, 2 * T, t0=T)
    return psi, psi0
