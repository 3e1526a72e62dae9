import warnings

import numpy as np
import pytest
from scipy.integrate import dblquad

from geophase.bipartite import (BipartiteCoeffs, BipartiteEnvSpec, compute_coeffs, concurrence,
                                concurrence_crossings, coherence_decay_time, decay_functions,
                                evolve_bipartite, evolve_master_equation, gp_expansion_bipartite,
                                initial_state, matrix_elements, open_gp_bipartite,
                                approx_gp_bipartite)
from geophase.errors import DomainError, InvalidPolarization, InvalidState

X, Y = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)


def test_decay_function_limits():
    assert abs(decay_functions("A", 0, 1e-4) - 2 / 3) < 1e-7
    assert abs(decay_functions("B", 0, np.pi) + 1 / np.pi**2) < 1e-15
    for kind in ("A", "B"):
        x = np.linspace(10, 1e4, 5000)
        assert np.all(np.abs(decay_functions(kind, 0, x) * x) <= 1.01)
    assert abs(decay_functions("C", 1, 1e6, 3.0, 4.0)) < 1e-5
    with pytest.raises(DomainError):
        decay_functions("A", 0, 0.0)


def test_free_space_single_rate():
    rng = np.random.default_rng(5)
    for _ in range(10):
        r = rng.normal(size=3)
        r = tuple(r / np.linalg.norm(r))
        c = compute_coeffs(BipartiteEnvSpec(gamma0=0.01, L_tilde=3.0, pol1=r, pol2=r))
        assert abs(c.a[0, 0] - 0.01 / 3) < 1e-15


def test_far_apart_pair_decouples():
    c = compute_coeffs(BipartiteEnvSpec(gamma0=1.0, L_tilde=1e7))
    assert abs(c.a[0, 1]) < 1e-6


def _correlation_xx(R):
    # (1/4π)∫dΩ (1 - k_x²) cos(k·R), transverse vacuum correlation at unit frequency
    def f(phi, th):
        k = np.array([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.cos(th)])
        return (1 - k[0] ** 2) * np.cos(k @ R) * np.sin(th)
    val, _ = dblquad(f, 0, np.pi, 0, 2 * np.pi, epsabs=1e-11, epsrel=1e-9)
    return val / (4 * np.pi)


def test_pair_coefficient_against_kernel_quadrature():
    L = 2.5
    env = BipartiteEnvSpec(gamma0=1.0, L_tilde=L, d_tilde=L)
    # the parallel dipole's image is inverted, so the mirror term enters with a minus sign
    oracle = _correlation_xx(np.array([0, 0, L])) - _correlation_xx(np.array([0, L, L]))
    assert abs(compute_coeffs(env).a[0, 1] - oracle) < 1e-8 * max(1, abs(oracle))


def test_invalid_polarization_and_warnings():
    with pytest.raises(InvalidPolarization):
        compute_coeffs(BipartiteEnvSpec(gamma0=0.1, L_tilde=2.0, pol1=(1.0, 1.0, 0.0)))
    with pytest.warns(UserWarning):
        compute_coeffs(BipartiteEnvSpec(gamma0=0.1, L_tilde=0.5))


def test_free_space_recovery():
    far = compute_coeffs(BipartiteEnvSpec(gamma0=1.0, L_tilde=3.0, d_tilde=1e6, pol1=Y, pol2=Y))
    free = compute_coeffs(BipartiteEnvSpec(gamma0=1.0, L_tilde=3.0, pol1=Y, pol2=Y))
    assert np.allclose(far.a, free.a, rtol=1e-5, atol=0)
    env = BipartiteEnvSpec(gamma0=1.0, L_tilde=3.0, d_tilde=4.0)
    assert abs(env.s_tilde**2 - 25.0) < 1e-12


def test_initial_elements():
    env = BipartiteEnvSpec(gamma0=0.01, L_tilde=7.811)
    rho = evolve_bipartite(env, 1.1, [0.0])[0]
    assert abs(rho[0, 0] - np.cos(0.55) ** 2) < 1e-15
    assert abs(rho[1, 1]) == 0 and abs(rho[2, 2]) == 0
    assert abs(abs(rho[3, 0]) - np.sin(1.1) / 2) < 1e-15


def test_degenerate_rate_limit_against_master_equation():
    coeffs = BipartiteCoeffs(a=np.diag([0.02, 0.02]), c=np.zeros((2, 2)))
    env = BipartiteEnvSpec(gamma0=0.06, L_tilde=5.0)
    t = np.linspace(0, 60, 31)
    r22 = matrix_elements(coeffs, 0.8, t)[1]
    closed = np.cos(0.4) ** 2 * (np.exp(-0.04 * t) - np.exp(-0.08 * t))
    assert np.max(np.abs(r22 - closed)) < 1e-14
    numeric = evolve_master_equation(env, 0.8, t, coeffs=coeffs)
    assert np.max(np.abs(numeric[:, 1, 1] - r22)) < 1e-8


@pytest.mark.parametrize("d_tilde,pol", [(None, X), (2 * 7.811, X), (3.9, Y)])
def test_closed_forms_against_master_equation(d_tilde, pol):
    env = BipartiteEnvSpec(gamma0=0.02, L_tilde=7.811, d_tilde=d_tilde, pol1=pol, pol2=pol)
    t = np.linspace(0, 80, 41)
    closed = evolve_bipartite(env, 1.2, t)
    numeric = evolve_master_equation(env, 1.2, t)
    assert np.max(np.abs(closed - numeric)) < 1e-7


@pytest.mark.parametrize("d_tilde,pol", [(None, X), (2 * 7.811, X), (7.811, Y), (2 * 7.811, Y)])
def test_density_matrix_invariants_over_long_times(d_tilde, pol):
    env = BipartiteEnvSpec(gamma0=0.01, L_tilde=7.811, d_tilde=d_tilde, pol1=pol, pol2=pol)
    rho = evolve_bipartite(env, 2.0, np.linspace(0, 20 / 0.01, 400))
    assert np.max(np.abs(np.trace(rho, axis1=1, axis2=2) - 1)) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    c = [concurrence(r, x_state=True) for r in rho]
    assert min(c) >= 0 and max(c) <= 1


def test_indefinite_rate_matrix_is_flagged():
    # parallel dipoles with the plane at d = L/2: the collective term outgrows the single rate
    env = BipartiteEnvSpec(gamma0=0.01, L_tilde=7.811, d_tilde=7.811, pol1=X, pol2=X)
    with pytest.warns(UserWarning, match="not positive semidefinite"):
        coeffs = compute_coeffs(env)
    assert coeffs.a[0, 1] > coeffs.a[0, 0]


def test_concurrence_values():
    rho0 = np.outer(initial_state(0.0), initial_state(0.0).conj())
    assert concurrence(rho0) == 0
    bell = np.outer(initial_state(np.pi / 2), initial_state(np.pi / 2).conj())
    assert abs(concurrence(bell) - 1) < 1e-12
    assert abs(concurrence(bell, x_state=True) - 1) < 1e-12
    with pytest.raises(InvalidState):
        concurrence(np.eye(4))


def test_x_state_fast_path_matches_general():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        p = rng.dirichlet(np.ones(4))
        rho = np.diag(p).astype(complex)
        o41 = rng.uniform(0, 1) * np.sqrt(p[0] * p[3]) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        o23 = rng.uniform(0, 1) * np.sqrt(p[1] * p[2]) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        rho[3, 0], rho[0, 3] = o41, np.conj(o41)
        rho[1, 2], rho[2, 1] = o23, np.conj(o23)
        assert abs(concurrence(rho, x_state=True) - concurrence(rho)) < 1e-10


def test_concurrence_crossings_are_zeros():
    env = BipartiteEnvSpec(gamma0=0.05, L_tilde=7.811)
    times = concurrence_crossings(env, 0.5, 60.0)
    assert len(times) >= 1
    for t in times:
        assert concurrence(evolve_bipartite(env, 0.5, [t])[0], x_state=True) < 1e-8


def test_open_phase_unitary_limit_and_product_state():
    env = BipartiteEnvSpec(gamma0=0.0, L_tilde=7.811)
    phi, delta = open_gp_bipartite(env, 1.0, 2 * np.pi)
    assert abs(np.angle(np.exp(1j * (phi + 2 * np.pi * (1 - np.cos(1.0)))))) < 1e-9
    assert abs(delta) < 1e-9
    assert open_gp_bipartite(BipartiteEnvSpec(gamma0=0.01, L_tilde=7.811), 0.0, 2 * np.pi)[1] == 0.0


def test_open_phase_small_coupling_first_order():
    env = BipartiteEnvSpec(gamma0=1e-4, L_tilde=7.811)
    delta = open_gp_bipartite(env, np.pi / 2, 2 * np.pi)[1]
    assert abs(delta + 4 * np.pi**2 / 3 * 1e-4) < 100 * 1e-8


def test_expansion_properties():
    env = BipartiteEnvSpec(gamma0=0.01, L_tilde=7.811, d_tilde=2 * 7.811)
    assert gp_expansion_bipartite(env, 0.0) == (0.0, 0.0)
    first_a = gp_expansion_bipartite(BipartiteEnvSpec(gamma0=0.01, L_tilde=3.0), 1.0)[0]
    first_b = gp_expansion_bipartite(BipartiteEnvSpec(gamma0=0.01, L_tilde=30.0), 1.0)[0]
    assert first_a == first_b


@pytest.mark.parametrize("theta", [np.pi / 4, np.pi / 2, 3 * np.pi / 4])
def test_approximation_within_ten_percent(theta):
    env = BipartiteEnvSpec(gamma0=1e-2, L_tilde=7.811, d_tilde=2 * 7.811)
    phi = open_gp_bipartite(env, theta, 2 * np.pi)[0]
    approx = np.angle(np.exp(1j * approx_gp_bipartite(env, theta)))
    assert abs(np.angle(np.exp(1j * (phi - approx)))) / abs(phi) < 0.1


def test_mirror_hierarchy():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for ratio in (0.5, 1.0):
            L = 7.811
            t_par = coherence_decay_time(BipartiteEnvSpec(gamma0=0.01, L_tilde=L, d_tilde=2 * ratio * L, pol1=X, pol2=X))
            t_free = coherence_decay_time(BipartiteEnvSpec(gamma0=0.01, L_tilde=L))
            t_perp = coherence_decay_time(BipartiteEnvSpec(gamma0=0.01, L_tilde=L, d_tilde=2 * ratio * L, pol1=Y, pol2=Y))
            assert t_par > t_free > t_perp
