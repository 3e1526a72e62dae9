import numpy as np
import pytest

from geophase.errors import AmbiguousBranch, InvalidState, NonHermitianInput
from geophase.jc import JCParams, initial_excited_vacuum, lindblad_evolve_jc, unitary_state_jc
from geophase.qcore import (IDENTITY2, SIGMA_X, SIGMA_Z, check_density_matrix, eig_hermitian,
                            evolve_lindblad, integrate_ode, track_branch, track_branches,
                            trace_distance)

from conftest import random_hermitian


def test_eig_identity():
    vals, vecs = eig_hermitian(IDENTITY2)
    assert np.allclose(vals, [1, 1])
    assert np.allclose(vecs.conj().T @ vecs, np.eye(2))


def test_eig_sigma_z():
    vals, vecs = eig_hermitian(SIGMA_Z)
    assert np.allclose(vals, [1, -1])
    assert abs(abs(vecs[0, 0]) - 1) < 1e-12
    assert abs(abs(vecs[1, 1]) - 1) < 1e-12


def test_eig_diagonal():
    vals, _ = eig_hermitian(np.diag([0.3, 0.7]))
    assert np.allclose(vals, [0.7, 0.3])


def test_eig_rejects_non_hermitian():
    with pytest.raises(NonHermitianInput):
        eig_hermitian(np.array([[0, 1], [0, 0]]))


def test_eig_reconstruction_random():
    rng = np.random.default_rng(1)
    for dim in (2, 3, 4):
        for _ in range(300):
            m = random_hermitian(rng, dim)
            vals, vecs = eig_hermitian(m)
            assert np.max(np.abs(m - (vecs * vals) @ vecs.conj().T)) < 1e-9
            assert np.max(np.abs(m @ vecs - vecs * vals)) < 1e-10


def test_track_constant_matrix():
    m = np.diag([0.8, 0.2]).astype(complex)
    tr = track_branches([(float(i), m) for i in range(10)])
    ov = np.abs(np.einsum("ij,ij->i", tr.branch(0)[:1].conj().repeat(10, 0), tr.branch(0)))
    assert np.allclose(ov, 1)


def test_track_small_rotation():
    eps = np.linspace(0, 0.1, 100)
    snaps = [(e, np.cos(e) * SIGMA_Z + np.sin(e) * SIGMA_X) for e in eps]
    tr = track_branches(snaps)
    assert np.all(np.abs(tr.branch(0)[:, 0]) > 0.99)


def test_track_ambiguous_raises():
    snaps = [(0.0, SIGMA_Z), (1.0, SIGMA_X)]
    with pytest.raises(AmbiguousBranch):
        track_branches(snaps)


def test_track_jc_density_matrix_against_dense_matching():
    # oracle: per-step re-diagonalization, matching by overlap with the previous vector
    p = JCParams(Delta=0.1, gamma=0.1, p=0.005)
    t = np.linspace(0, p.period, 400)
    rhos = lindblad_evolve_jc(p, initial_excited_vacuum(), t)
    blocks = [r[1:, 1:] for r in rhos]
    _, _, vecs = track_branch(list(zip(t, blocks)), np.array([1, 0], dtype=complex))
    current = np.array([1, 0], dtype=complex)
    for b, v in zip(blocks, vecs):
        w, u = np.linalg.eigh(b)
        k = int(np.argmax(np.abs(u.conj().T @ current)))
        current = u[:, k]
        assert abs(abs(np.vdot(current, v)) - 1) < 1e-10


def test_integrate_constant():
    sol = integrate_ode(lambda t, y: np.zeros_like(y), np.array([1.0]), (0, 1))
    assert sol.y[-1, 0] == 1.0


def test_integrate_exponential():
    sol = integrate_ode(lambda t, y: 1j * y, np.array([1.0 + 0j]), (0, 2 * np.pi))
    assert abs(sol.y[-1, 0] - 1) < 1e-8


def test_integrate_jc_unitary_limit():
    p = JCParams(Delta=0.7)
    t = np.linspace(0, 2 * p.period, 50)
    rhos = lindblad_evolve_jc(p, initial_excited_vacuum(), t)
    psi = unitary_state_jc(p, t)
    for r, s in zip(rhos, psi):
        assert np.max(np.abs(r[1:, 1:] - np.outer(s, s.conj()))) < 1e-7


def test_lindblad_trace_and_hermiticity_long_span():
    p = JCParams(Delta=0.3, gamma=0.25, p=0.01)
    t = np.linspace(0, 50 * p.period, 500)
    rhos = lindblad_evolve_jc(p, initial_excited_vacuum(), t)
    assert np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1)) < 1e-8
    assert np.max(np.abs(rhos - rhos.conj().transpose(0, 2, 1))) < 1e-9


def test_generic_lindblad_decay():
    lower = np.array([[0, 0], [1, 0]], dtype=complex)  # |1> -> |0>
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    t = np.linspace(0, 3, 7)
    rhos = evolve_lindblad(np.zeros((2, 2)), [np.sqrt(0.5) * lower], rho0, t)
    assert np.allclose(rhos[:, 0, 0].real, np.exp(-0.5 * t), atol=1e-9)


def test_check_density_matrix():
    check_density_matrix(np.diag([0.5, 0.5]))
    with pytest.raises(InvalidState):
        check_density_matrix(np.diag([1.2, -0.2]))
    assert abs(trace_distance(np.diag([1, 0]), np.diag([0, 1])) - 1) < 1e-12
