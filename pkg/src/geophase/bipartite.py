"""Two identical qubits coupled to the electromagnetic vacuum, optionally near a
perfectly conducting plane at y = 0.

Qubits sit at d·ŷ + L·ẑ and d·ŷ. The product basis is ordered
    |1> = |++>, |2> = |+->, |3> = |-+>, |4> = |-->
with |+> the excited state. Frequencies and rates are in units of the qubit
frequency omega (omega = 1 by default).
"""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import DomainError, InvalidPolarization, InvalidState, OrthogonalEndpoints
from .phasefun import wrap_phase
from .qcore import check_density_matrix

FREE_SPACE = None  # d_tilde value meaning "no plane"


def _shift(kind, n):
    # A and C use x - nπ/2, B and D use x + nπ/2
    return -n * np.pi / 2 if kind in ("A", "C") else n * np.pi / 2


def decay_functions(kind, n, x, L_tilde=None, d_tilde=None):
    """Oscillating, decaying kernels A_n, B_n, C_n, D_n (n = 0, 1) at x > 0.

    C and D also need the reduced distances L_tilde and d_tilde.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("decay functions need x > 0")
    arg = x + _shift(kind, n)
    cs, sn = np.cos(arg), np.sin(arg)
    if kind == "A":
        return (x * cs + (x**2 - 1) * sn) / x**3
    if kind == "B":
        return (x * cs - sn) / x**3
    if L_tilde is None or d_tilde is None:
        raise ValueError(f"{kind}_n needs L_tilde and d_tilde")
    L2, d2 = L_tilde**2, d_tilde**2
    if kind == "C":
        return (-(2 * L2 + d2) * x * cs + (2 * L2 + d2 * (x**2 - 1)) * sn) / x**5
    if kind == "D":
        return (-(2 * d2 - L2) * x * cs + (2 * d2 + L2 * (x**2 - 1)) * sn) / x**5
    raise ValueError(f"unknown decay function {kind!r}")


def _zero_shift(d_tilde, axis):
    return 0.0


@dataclass(frozen=True)
class BipartiteEnvSpec:
    """Vacuum environment of the qubit pair.

    ``d_tilde = FREE_SPACE`` (None) removes the plane. ``plane_shift`` supplies the
    single-particle frequency shift from the plane, as a function of
    ``(d_tilde, axis)``; it defaults to zero.
    """
    gamma0: float
    L_tilde: float
    d_tilde: Optional[float] = FREE_SPACE
    pol1: tuple = (1.0, 0.0, 0.0)
    pol2: tuple = (1.0, 0.0, 0.0)
    omega: float = 1.0
    plane_shift: Callable = field(default=_zero_shift, compare=False)

    @property
    def free_space(self):
        return self.d_tilde is FREE_SPACE or (
            isinstance(self.d_tilde, float) and np.isinf(self.d_tilde))

    @property
    def s_tilde(self):
        if self.free_space:
            return np.inf
        return float(np.hypot(self.d_tilde, self.L_tilde))

    def validity_warnings(self):
        msgs = []
        if self.L_tilde < 1:
            msgs.append(f"L_tilde = {self.L_tilde} < 1: Markov approximation questionable")
        if not self.free_space and self.d_tilde < 1:
            msgs.append(f"d_tilde = {self.d_tilde} < 1: Markov approximation questionable")
        return msgs


@dataclass(frozen=True)
class BipartiteCoeffs:
    a: np.ndarray
    c: np.ndarray


def _check_pol(r):
    r = np.asarray(r, dtype=float)
    if r.shape != (3,) or abs(np.linalg.norm(r) - 1) > 1e-9:
        raise InvalidPolarization(f"polarization {r.tolist()} is not a unit 3-vector")
    return r


def _single_factors(env, order):
    """Per-axis plane corrections f_2,ll (order 0) or h_2,ll (order 1)."""
    if env.free_space:
        return np.zeros(3)
    if order == 0:
        a = decay_functions("A", 0, env.d_tilde)
        b = decay_functions("B", 0, env.d_tilde)
        return np.array([a, 2 * b, a])
    return np.array([env.plane_shift(env.d_tilde, k) for k in range(3)])


def _pair_factors(env, order):
    """Per-axis (f1 - f2) for order 0 or (h1 - h2) for order 1, cross terms."""
    L = env.L_tilde
    first = np.array([
        decay_functions("A", order, L),
        decay_functions("A", order, L),
        -2 * decay_functions("B", order, L),
    ])
    if env.free_space:
        return first
    s = env.s_tilde
    second = np.array([
        decay_functions("A", order, s),
        decay_functions("D", order, s, L, env.d_tilde),
        decay_functions("C", order, s, L, env.d_tilde),
    ])
    return first - second


def compute_coeffs(env):
    """Dissipative (a) and coherent (c) coefficient matrices in units of omega."""
    for msg in env.validity_warnings():
        warnings.warn(msg, stacklevel=2)
    r = [_check_pol(env.pol1), _check_pol(env.pol2)]
    single_a = 1.0 / 3.0 - _single_factors(env, 0)
    single_c = 0.0 - _single_factors(env, 1)
    pair_a = _pair_factors(env, 0)
    pair_c = _pair_factors(env, 1)
    a = np.empty((2, 2))
    c = np.empty((2, 2))
    for l in range(2):
        for m in range(2):
            w = r[l] * r[m]
            a[l, m] = env.gamma0 * np.dot(w, single_a if l == m else pair_a)
            c[l, m] = env.gamma0 * np.dot(w, single_c if l == m else pair_c)
    if np.linalg.eigvalsh(a).min() < -1e-12 * max(np.abs(a).max(), 1e-300):
        warnings.warn("dissipative matrix a is not positive semidefinite: the collective rate "
                      "exceeds the single-qubit rate and populations can turn negative",
                      stacklevel=2)
    return BipartiteCoeffs(a, c)


def initial_state(theta0):
    psi = np.zeros(4, dtype=complex)
    psi[0] = np.cos(theta0 / 2)
    psi[3] = np.sin(theta0 / 2)
    return psi


def _relax(rate, t):
    # (1 - exp(-2 rate t)) / (2 rate), finite as rate -> 0
    rate = np.asarray(rate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-2 * rate * t) / (2 * rate)
    return np.where(np.abs(rate * t) < 1e-12, t, out)


def matrix_elements(coeffs, theta0, t, omega=1.0):
    """Analytic (rho11, rho22, rho44, rho41, rho23) at times ``t``."""
    a, c = coeffs.a, coeffs.c
    if abs(a[0, 0] - a[1, 1]) > 1e-12 * max(1.0, abs(a[0, 0])):
        raise ValueError("closed forms assume identical single-qubit rates")
    t = np.asarray(t, dtype=float)
    a11, a12 = a[0, 0], a[0, 1]
    ap, am = a11 + a12, a11 - a12
    c2 = np.cos(theta0 / 2) ** 2
    rho11 = c2 * np.exp(-4 * a11 * t)
    # decay into the symmetric (rate 2a+) and antisymmetric (rate 2a-) one-excitation states
    sym = 2 * ap * c2 * np.exp(-2 * ap * t) * _relax(am, t)
    anti = 2 * am * c2 * np.exp(-2 * am * t) * _relax(ap, t)
    rho22 = 0.5 * (sym + anti)
    rho23 = 0.5 * (sym - anti)
    rho41 = 0.5 * np.sin(theta0) * np.exp(-2 * a11 * t) * np.exp(2j * (c[0, 0] + omega) * t)
    rho44 = 1 - rho11 - 2 * rho22
    return rho11, rho22, rho44, rho41, rho23


def evolve_bipartite(env, theta0, t_samples, coeffs=None):
    """Density matrices (shape (len(t), 4, 4)) from the closed-form elements."""
    coeffs = coeffs or compute_coeffs(env)
    t = np.atleast_1d(np.asarray(t_samples, dtype=float))
    r11, r22, r44, r41, r23 = matrix_elements(coeffs, theta0, t, env.omega)
    rho = np.zeros((len(t), 4, 4), dtype=complex)
    rho[:, 0, 0] = r11
    rho[:, 1, 1] = r22
    rho[:, 2, 2] = r22
    rho[:, 3, 3] = r44
    rho[:, 3, 0] = r41
    rho[:, 0, 3] = np.conj(r41)
    rho[:, 1, 2] = r23
    rho[:, 2, 1] = r23
    return rho


def _lowering_ops():
    sm = np.array([[0, 0], [1, 0]], dtype=complex)  # |-><+|
    eye = np.eye(2, dtype=complex)
    return [np.kron(sm, eye), np.kron(eye, sm)]


def master_equation_rhs(coeffs, omega=1.0):
    """Flattened right-hand side of the pair master equation with a, c matrices."""
    lows = _lowering_ops()
    raises = [op.conj().T for op in lows]
    sz = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    h = 0.5 * omega * (np.kron(sz, eye) + np.kron(eye, sz))
    for l in range(2):
        for m in range(2):
            h = h + coeffs.c[l, m] * raises[l] @ lows[m]
    a = coeffs.a

    def rhs(t, y):
        rho = y.reshape(4, 4)
        out = -1j * (h @ rho - rho @ h)
        for l in range(2):
            for m in range(2):
                if a[l, m] == 0:
                    continue
                out -= a[l, m] * (raises[l] @ lows[m] @ rho + rho @ raises[m] @ lows[l]
                                  - lows[m] @ rho @ raises[l] - lows[l] @ rho @ raises[m])
        return out.ravel()

    return rhs


def evolve_master_equation(env, theta0, t_samples, coeffs=None):
    """Numerical integration of the pair master equation (oracle for the closed forms)."""
    from .qcore import integrate_ode
    coeffs = coeffs or compute_coeffs(env)
    psi = initial_state(theta0)
    t = np.asarray(t_samples, dtype=float)
    sol = integrate_ode(master_equation_rhs(coeffs, env.omega), np.outer(psi, psi.conj()).ravel(),
                        (t[0], t[-1]), t)
    return sol.y.reshape(-1, 4, 4)


_SYSY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho, x_state=False):
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidState("concurrence needs a 4x4 density matrix")
    check_density_matrix(rho, trace_tol=1e-8, eig_tol=1e-8, herm_tol=1e-10)
    if x_state:
        r11, r22, r33, r44 = rho[0, 0].real, rho[1, 1].real, rho[2, 2].real, rho[3, 3].real
        o41, o23 = abs(rho[3, 0]), abs(rho[1, 2])
        a, b = np.sqrt(max(r11 * r44, 0.0)), np.sqrt(max(r22 * r33, 0.0))
        roots = np.array([a + o41, abs(a - o41), b + o23, abs(b - o23)])
    else:
        # singular values of sqrt(rho)·Σ·sqrt(rho)* are the square roots of the spectrum of
        # rho·Σ·rho*·Σ, without the loss of precision of square-rooting tiny eigenvalues
        w, v = np.linalg.eigh(rho)
        w = np.where(w > 1e-14 * max(w.max(), 1e-300), w, 0.0)
        half = (v * np.sqrt(w)) @ v.conj().T
        roots = np.linalg.svd(half @ _SYSY @ half.conj(), compute_uv=False)
    roots = np.sort(roots)[::-1]
    return float(max(0.0, roots[0] - roots[1:].sum()))


def _x_concurrence_raw(coeffs, theta0, t, omega=1.0):
    r11, r22, r44, r41, r23 = matrix_elements(coeffs, theta0, t, omega)
    a = np.sqrt(np.clip(r11 * r44, 0, None))
    return np.maximum(2 * (np.abs(r41) - r22), 2 * (np.abs(r23) - a))


def concurrence_crossings(env, theta0, t_max, n_grid=4000, tol=1e-10):
    """Times where the concurrence switches between zero and non-zero.

    Found by bracketing sign changes of the X-state expression on a grid and
    refining with Brent's method to ``tol`` in omega·t.
    """
    coeffs = compute_coeffs(env)
    t = np.linspace(0.0, t_max, n_grid)
    raw = _x_concurrence_raw(coeffs, theta0, t, env.omega)
    out = []
    f = lambda s: float(_x_concurrence_raw(coeffs, theta0, s, env.omega))
    for i in np.nonzero(np.sign(raw[:-1]) * np.sign(raw[1:]) < 0)[0]:
        out.append(brentq(f, t[i], t[i + 1], xtol=tol))
    return np.array(out)


def coherence_decay_time(env, threshold=np.exp(-2.0)):
    """First time |rho41(t)| drops below ``threshold``·|rho41(0)|."""
    coeffs = compute_coeffs(env)
    a11 = coeffs.a[0, 0]
    if a11 <= 0:
        return np.inf
    g = lambda t: np.exp(-2 * a11 * t) - threshold
    hi = 1.0 / a11
    while g(hi) > 0:
        hi *= 2
    return brentq(g, 0.0, hi, xtol=1e-12, rtol=1e-14)


def natural_period(env):
    return 2 * np.pi / env.omega


def unitary_gp_bipartite(theta0, t, omega=1.0):
    return -2 * np.pi * (1 - np.cos(theta0)) * t / (2 * np.pi / omega)


def _plus_branch(r11, r44, r41):
    half = 0.5 * (r11 + r44)
    eps = half + np.sqrt(0.25 * (r11 - r44) ** 2 + np.abs(r41) ** 2)
    return eps, eps - r44


def open_gp_bipartite(env, theta0, t, coeffs=None):
    """(phi_g, delta_phi) at time ``t`` from the eigenvector of rho in the {|++>, |-->} block."""
    coeffs = coeffs or compute_coeffs(env)
    phi_u = unitary_gp_bipartite(theta0, t, env.omega)
    if abs(np.sin(theta0)) < 1e-14:
        return wrap_phase(phi_u), 0.0
    w = 2 * (env.omega + coeffs.c[0, 0])

    def integrand(s):
        r11, _, r44, r41, _ = matrix_elements(coeffs, theta0, s, env.omega)
        _, gap = _plus_branch(r11, r44, r41)
        q = abs(r41) ** 2
        return w * q / (gap**2 + q)

    def branch(s):
        r11, _, r44, r41, _ = matrix_elements(coeffs, theta0, s, env.omega)
        _, gap = _plus_branch(r11, r44, r41)
        v = np.array([gap, r41], dtype=complex)
        return v / np.linalg.norm(v)

    overlap = np.vdot(branch(0.0), branch(t))
    if abs(overlap) < 1e-12:
        raise OrthogonalEndpoints("eigenvector returns orthogonal to its start")
    n_pieces = max(1, int(np.ceil(t / natural_period(env) * 4)))
    edges = np.linspace(0.0, t, n_pieces + 1)
    dyn = sum(quad(integrand, a0, b0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
              for a0, b0 in zip(edges[:-1], edges[1:]))
    phi_g = np.angle(overlap) - dyn
    return wrap_phase(phi_g), wrap_phase(phi_g - phi_u)


def gp_expansion_bipartite(env, theta0, coeffs=None):
    """(first-order, second-order) weak-coupling terms of phi_g at t = 2π/omega."""
    coeffs = coeffs or compute_coeffs(env)
    a11, a12 = coeffs.a[0, 0], coeffs.a[0, 1]
    s2, c = np.sin(theta0) ** 2, np.cos(theta0)
    w = env.omega
    first = -4 * np.pi**2 * s2 * a11 / w
    second = -(16 * np.pi**3 / 3) * s2 * ((a11**2 + a12**2) * (1 + c) + 2 * a11**2 * c) / w**2
    return first, second


def approx_gp_bipartite(env, theta0, coeffs=None):
    first, second = gp_expansion_bipartite(env, theta0, coeffs)
    return -2 * np.pi * (1 - np.cos(theta0)) + first + second
