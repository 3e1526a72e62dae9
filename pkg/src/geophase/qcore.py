"""Small dense linear algebra, density matrices, branch tracking and ODE plumbing.

States are plain complex numpy arrays. Kets are 1-D arrays of length ``dim``
and operators are ``(dim, dim)`` arrays. Nothing here is model specific.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AmbiguousBranch, InvalidState, NonHermitianInput, StepSizeUnderflow

# |1> = (1, 0) is the +1 eigenstate of sigma_z, |0> = (0, 1).
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-9
DEGENERATE_GAP = 1e-9
AMBIGUITY_TOL = 1e-6


def ket(*amplitudes):
    return np.asarray(amplitudes, dtype=complex)


def normalize(psi):
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm < 1e-300:
        raise InvalidState("cannot normalize the zero vector")
    return psi / norm


def projector(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    return np.max(np.abs(m - dagger(m)), initial=0.0) <= tol


def check_density_matrix(rho, trace_tol=1e-10, eig_tol=1e-10, herm_tol=1e-12):
    """Raise InvalidState unless ``rho`` is Hermitian, unit trace and PSD."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidState(f"density matrix must be square, got shape {rho.shape}")
    if not is_hermitian(rho, herm_tol):
        raise InvalidState("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise InvalidState(f"trace {np.trace(rho).real:.3e} differs from 1")
    lam_min = np.linalg.eigvalsh(rho).min()
    if lam_min < -eig_tol:
        raise InvalidState(f"negative eigenvalue {lam_min:.3e}")
    return rho


def trace_distance(rho, sigma):
    return 0.5 * np.abs(np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))).sum()


def eig_hermitian(m):
    """Eigenvalues in descending order with the matching orthonormal eigenvectors.

    Returns ``(values, vectors)`` where ``vectors[:, k]`` belongs to ``values[k]``.
    """
    m = np.asarray(m, dtype=complex)
    if np.max(np.abs(m - dagger(m)), initial=0.0) > HERMITIAN_TOL:
        raise NonHermitianInput("matrix differs from its adjoint by more than 1e-9")
    vals, vecs = np.linalg.eigh(0.5 * (m + dagger(m)))
    return vals[::-1].copy(), vecs[:, ::-1].copy()


@dataclass(frozen=True)
class EigTracked:
    """Eigen-decompositions along a time grid with continuous branch labels.

    ``vectors[i][:, k]`` is branch ``k`` at ``times[i]``; ``values[i][k]`` its eigenvalue.
    """
    times: np.ndarray
    values: np.ndarray
    vectors: np.ndarray

    def branch(self, k):
        return self.vectors[:, :, k]


def _best_assignment(overlap):
    # overlap[j, k] = |<v_j(old)|v_k(new)>|; returns perm with new index perm[j] for old j
    n = overlap.shape[0]
    if n > 6:
        from scipy.optimize import linear_sum_assignment
        rows, cols = linear_sum_assignment(-overlap)
        return cols, np.inf
    scores = []
    for perm in permutations(range(n)):
        scores.append((overlap[np.arange(n), perm].sum(), perm))
    scores.sort(key=lambda s: -s[0])
    margin = scores[0][0] - scores[1][0] if len(scores) > 1 else np.inf
    return np.array(scores[0][1]), margin


def track_branches(snapshots):
    """Diagonalize each ``(time, matrix)`` snapshot and follow branches by max overlap.

    Branch order is fixed by the descending eigenvalue order at the first time.
    Raises AmbiguousBranch when two assignments score within 1e-6 of each other.
    """
    times = np.array([s[0] for s in snapshots], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    vals0, vecs0 = eig_hermitian(snapshots[0][1])
    all_vals, all_vecs = [vals0], [vecs0]
    for i in range(1, len(snapshots)):
        vals, vecs = eig_hermitian(snapshots[i][1])
        prev = all_vecs[-1]
        overlap = np.abs(dagger(prev) @ vecs)
        perm, margin = _best_assignment(overlap)
        if margin < AMBIGUITY_TOL:
            raise AmbiguousBranch(
                f"branch assignment ambiguous between t={times[i-1]:.6g} and t={times[i]:.6g}"
            )
        all_vals.append(vals[perm])
        all_vecs.append(vecs[:, perm])
    return EigTracked(times, np.array(all_vals), np.array(all_vecs))


def track_branch(snapshots, start_vector):
    """Follow the single branch that starts closest to ``start_vector``.

    Returns ``(times, eigenvalues, eigenvectors)`` for that branch only. Unlike
    ``track_branches`` this tolerates degeneracies among the other branches.
    """
    times = np.array([s[0] for s in snapshots], dtype=float)
    mats = np.array([s[1] for s in snapshots], dtype=complex)
    if np.max(np.abs(mats - dagger(mats)), initial=0.0) > HERMITIAN_TOL:
        raise NonHermitianInput("matrix differs from its adjoint by more than 1e-9")
    vals, vecs = np.linalg.eigh(0.5 * (mats + dagger(mats)))
    current = np.asarray(start_vector, dtype=complex)
    out_vals = np.empty(len(times))
    out_vecs = np.empty((len(times), mats.shape[1]), dtype=complex)
    for i in range(len(times)):
        ov = np.abs(vecs[i].conj().T @ current)
        order = np.argsort(ov)[::-1]
        if len(ov) > 1 and ov[order[0]] - ov[order[1]] < AMBIGUITY_TOL:
            raise AmbiguousBranch(f"tracked branch not separated at t={times[i]:.6g}")
        k = order[0]
        current = vecs[i][:, k]
        out_vals[i] = vals[i][k]
        out_vecs[i] = current
    return times, out_vals, out_vecs


@dataclass(frozen=True)
class OdeSolution:
    t: np.ndarray
    y: np.ndarray  # shape (len(t), dim)


def integrate_ode(rhs, y0, t_span, t_eval=None, rtol=1e-9, atol=1e-12, method="DOP853"):
    """Adaptive embedded Runge-Kutta integration of ``y' = rhs(t, y)``.

    Complex state vectors are supported. Samples are returned at ``t_eval``
    (default: the two endpoints) as rows of ``y``.
    """
    y0 = np.asarray(y0)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t_eval is None:
        t_eval = np.array([t0, t1])
    t_eval = np.asarray(t_eval, dtype=float)
    if t1 == t0:
        return OdeSolution(t_eval, np.repeat(y0[None, :], len(t_eval), axis=0))
    sol = solve_ivp(rhs, (t0, t1), y0, method=method, t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status == -1:
        if "step size" in sol.message.lower():
            raise StepSizeUnderflow(sol.message)
        raise RuntimeError(sol.message)
    return OdeSolution(sol.t, sol.y.T)


def lindblad_rhs(hamiltonian, jump_ops):
    """Flattened Lindblad right-hand side.

    ``hamiltonian`` is a matrix or a function of time returning one; ``jump_ops``
    is a list of matrices (rates already folded in) or a function of time
    returning such a list.
    """
    h_of_t = hamiltonian if callable(hamiltonian) else (lambda t, h=np.asarray(hamiltonian): h)
    l_of_t = jump_ops if callable(jump_ops) else (lambda t, ls=list(jump_ops): ls)
    dim = np.asarray(h_of_t(0.0)).shape[0]

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        h = h_of_t(t)
        out = -1j * (h @ rho - rho @ h)
        for op in l_of_t(t):
            opd = op.conj().T
            ldl = opd @ op
            out += op @ rho @ opd - 0.5 * (ldl @ rho + rho @ ldl)
        return out.ravel()

    return rhs


def evolve_lindblad(hamiltonian, jump_ops, rho0, t_samples, rtol=1e-9, atol=1e-12):
    """Integrate a Lindblad equation and return density matrices at ``t_samples``."""
    rho0 = np.asarray(rho0, dtype=complex)
    dim = rho0.shape[0]
    t_samples = np.asarray(t_samples, dtype=float)
    sol = integrate_ode(lindblad_rhs(hamiltonian, jump_ops), rho0.ravel(),
                        (t_samples[0], t_samples[-1]), t_samples, rtol=rtol, atol=atol)
    return sol.y.reshape(-1, dim, dim)
