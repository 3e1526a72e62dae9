import numpy as np
import pytest

from geophase.errors import EmptyEnsemble, StepTooLarge
from geophase.phasefun import discrete_chain_phase, nojump_gp, trajectory_gp, wrap_phase
from geophase.spin import RotatingFieldParams, instantaneous_eigenstates, propagate_exact
from geophase.trajectories import (JumpChannelSet, build_jump_operators, echo_parameter,
                                   expected_jump_count, expm2, find_singularity, mc_step,
                                   nojump_path, nojump_phase, nojump_phase_sampled,
                                   nojump_state_analytic, nojump_state_numeric, phase_ensemble,
                                   run_batch, run_trajectory, scan_for_roots, singularity_condition,
                                   step_bookkeeping, topo_scan, trajectory_stream,
                                   winding_difference)
from geophase.errors import DomainError

FAST = RotatingFieldParams(Omega=5e-3, theta=0.34 * np.pi)


def sx(a, b):
    return np.vdot(a, np.array([[0, 1], [1, 0]]) @ b)


def test_channel_defaults_and_validation():
    ch = JumpChannelSet(Gamma=1e-3)
    assert ch.rates == (1e-3, 0.0, 0.32e-3, 0.0)
    with pytest.raises(DomainError):
        JumpChannelSet(Gamma=1e-3, gamma_z=-1.0)


def test_relaxation_operators_vanish_at_equator():
    p = RotatingFieldParams(Omega=5e-3, theta=np.pi / 2)
    plus, minus, _, _ = instantaneous_eigenstates(p, 0.0)
    assert abs(sx(minus, plus)) < 1e-15
    ops = build_jump_operators(p, JumpChannelSet(Gamma=1e-3), 0.0)
    assert np.max(np.abs(ops[0])) < 1e-15 and np.max(np.abs(ops[1])) < 1e-15


def test_matrix_elements():
    for th in (0.3, 1.2, 2.5):
        p = RotatingFieldParams(Omega=5e-3, theta=th)
        plus, minus, _, _ = instantaneous_eigenstates(p, 0.0)
        assert abs(abs(sx(minus, plus)) - abs(np.cos(th))) < 1e-15
        assert abs(sx(plus, plus) - np.sin(th)) < 1e-15
        ops = build_jump_operators(p, JumpChannelSet(Gamma=1e-2), 0.0)
        assert abs(np.linalg.norm(ops[2], 2) - np.sqrt(0.32e-2) * np.sin(th)) < 1e-14


def test_zero_rates_give_zero_operators():
    ch = JumpChannelSet(Gamma=0.0)
    assert all(np.max(np.abs(L)) == 0 for L in build_jump_operators(FAST, ch, 3.0))


def test_expm2_against_scipy():
    from scipy.linalg import expm
    rng = np.random.default_rng(2)
    for _ in range(200):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        a *= rng.choice([1e-10, 1e-3, 1.0, 5.0])
        assert np.max(np.abs(expm2(a) - expm(a))) < 1e-12 * max(1, np.abs(expm(a)).max())


def test_no_jump_step_matches_unitary_without_rates():
    rng = np.random.default_rng(0)
    ch = JumpChannelSet(Gamma=0.0)
    psi = instantaneous_eigenstates(FAST, 0.0)[0]
    dt = 0.05
    for k in range(50):
        ref = propagate_exact(FAST, psi, (k + 1) * dt, t0=k * dt)
        psi, event = mc_step(psi, k * dt, dt, FAST, ch, rng)
        assert event is None
        assert abs(abs(np.vdot(ref, psi)) - 1) < dt**2


def test_post_jump_state_is_lower_eigenstate():
    ch = JumpChannelSet(Gamma=1.0, gamma_d=0.0)
    rng = np.random.default_rng(1)
    psi = instantaneous_eigenstates(FAST, 0.0)[0]
    for _ in range(10000):
        out, event = mc_step(psi, 0.0, 5e-3, FAST, ch, rng)
        if event == "minus":
            minus = instantaneous_eigenstates(FAST, 0.0)[1]
            assert abs(abs(np.vdot(minus, out)) - 1) < 1e-14
            return
    pytest.fail("no relaxation jump drawn")


def test_step_too_large():
    ch = JumpChannelSet(Gamma=1.0)
    psi = instantaneous_eigenstates(FAST, 0.0)[0]
    with pytest.raises(StepTooLarge):
        mc_step(psi, 0.0, 0.1, FAST, ch, np.random.default_rng(0))


def test_empirical_jump_frequencies_binomial():
    ch = JumpChannelSet(Gamma=1.0, gamma_plus=0.3, gamma_z=0.2)
    t, dt = 7.0, 2.5e-3
    psi = np.array([0.8, 0.6j])
    ops = build_jump_operators(FAST, ch, t)
    probs = np.array([dt * np.linalg.norm(L @ psi) ** 2 for L in ops])
    rng = np.random.default_rng(123)
    n = 100_000
    counts = dict.fromkeys(("minus", "plus", "dephasing", "z", None), 0)
    for _ in range(n):
        counts[mc_step(psi, t, dt, FAST, ch, rng)[1]] += 1
    for k, name in enumerate(("minus", "plus", "dephasing", "z")):
        sigma = np.sqrt(n * probs[k] * (1 - probs[k]))
        assert abs(counts[name] - n * probs[k]) < 3 * sigma + 1


def test_probability_bookkeeping_along_trajectory():
    ch = JumpChannelSet(Gamma=1e-3, gamma_z=1e-4)
    dt = FAST.period / 20000
    psi = instantaneous_eigenstates(FAST, 0.0)[0]
    rng = np.random.default_rng(4)
    for k in range(0, 20000, 50):
        total = step_bookkeeping(psi, k * dt, dt, FAST, ch)
        assert abs(total - 1) <= 1e-4
        for _ in range(50):
            psi, _ = mc_step(psi, k * dt, dt, FAST, ch, rng)


def test_first_order_propagator_misses_bookkeeping():
    # the plain 1 - i dt H_eff step overshoots by (dt·ω/2)², which exceeds 1e-4 at this dt
    ch = JumpChannelSet(Gamma=1e-3)
    dt = FAST.period / 20000
    psi = np.array([1, 1j]) / np.sqrt(2)
    assert abs(step_bookkeeping(psi, 0.0, dt, FAST, ch, propagator="first-order") - 1) > 1e-4
    assert abs(step_bookkeeping(psi, 0.0, dt, FAST, ch) - 1) < 1e-8


def test_streams_are_per_trajectory():
    a = trajectory_stream(5, 17).random(4)
    assert np.array_equal(a, trajectory_stream(5, 17).random(4))
    assert not np.array_equal(a, trajectory_stream(5, 18).random(4))


def test_determinism_and_batch_independence():
    ch = JumpChannelSet(Gamma=1e-2)
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    r1 = run_batch(p, ch, 40, seed=9, block=40)
    r2 = run_batch(p, ch, 40, seed=9, block=7, threads=3)
    assert r1.jumps == r2.jumps
    assert np.array_equal(r1.final, r2.final)
    rec = run_trajectory(p, ch, seed=9, index=3)
    assert [(t, c) for t, c in zip(rec.jump_times, rec.jump_channels)] == r1.jumps[3]


def test_no_jumps_without_dissipation():
    res = run_batch(RotatingFieldParams(Omega=5e-2, theta=1.0), JumpChannelSet(Gamma=0.0), 20, seed=1)
    assert res.n_jumps.sum() == 0


def test_streamed_phase_equals_record_phase():
    ch = JumpChannelSet(Gamma=1e-2)
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    seen_jump = False
    for idx in range(12):
        rec = run_trajectory(p, ch, seed=2, index=idx)
        seen_jump |= len(rec.jump_times) > 0
        assert abs(wrap_phase(trajectory_gp(rec) - rec.streamed_phase)) < 1e-12
    assert seen_jump


def test_one_jump_record_against_chain_oracle():
    # oracle: Pancharatnam chain through every stored state, with the jump phase term added
    # back since a jump is not a smooth link
    ch = JumpChannelSet(Gamma=1e-2)
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    for idx in range(50):
        rec = run_trajectory(p, ch, seed=3, index=idx)
        if len(rec.jump_times) == 1:
            break
    else:
        pytest.fail("no single-jump record found")
    first, second = rec.segments
    closing = np.angle(np.vdot(first[0], second[-1]))
    links = [np.vdot(a, b) for seg in (first, second) for a, b in zip(seg[:-1], seg[1:])]
    smooth = -np.angle(links).sum()
    oracle = wrap_phase(closing + smooth - rec.jump_terms[0])
    assert abs(wrap_phase(trajectory_gp(rec) - oracle)) < 1e-12
    full = np.vstack([first, second])
    assert abs(wrap_phase(discrete_chain_phase(full) - oracle)) < 1e-12


def test_nojump_analytic_unitary_limit():
    t = np.linspace(0, FAST.period, 101)
    psi, norm = nojump_state_analytic(FAST, JumpChannelSet(Gamma=0.0), t)
    ref = propagate_exact(FAST, instantaneous_eigenstates(FAST, 0.0)[0], t)
    assert np.max(np.abs(np.abs(np.einsum("ij,ij->i", ref.conj(), psi)) - 1)) < 1e-9
    assert np.max(np.abs(psi - ref)) < 1e-9
    assert np.allclose(norm, 1, atol=1e-12)


def test_nojump_analytic_against_ode_and_monotone_norm():
    ch = JumpChannelSet(Gamma=1e-3)
    t = np.linspace(0, FAST.period, 201)
    psi, norm = nojump_state_analytic(FAST, ch, t)
    raw = nojump_state_numeric(FAST, ch, t)
    num_norm = np.linalg.norm(raw, axis=1)
    overlap = np.abs(np.einsum("ij,ij->i", (raw / num_norm[:, None]).conj(), psi))
    assert overlap.min() > 1 - 1e-3
    assert np.all(np.diff(num_norm) <= 1e-12)
    assert np.max(np.abs(norm - num_norm)) < 1e-2


def test_nojump_independent_of_gamma_z():
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    a = nojump_path(p, JumpChannelSet(Gamma=1e-2))
    b = nojump_path(p, JumpChannelSet(Gamma=1e-2, gamma_z=1e-3))
    assert a.jump_times == b.jump_times == []
    assert abs(abs(np.vdot(a.segments[-1][-1], b.segments[-1][-1])) - 1) < 1e-12


def test_zero_jump_record_matches_analytic_path():
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    ch = JumpChannelSet(Gamma=1e-2)
    rec = nojump_path(p, ch, sample_every=10)
    psi, _ = nojump_state_analytic(p, ch, np.linspace(0, p.period, 4001))
    assert abs(wrap_phase(trajectory_gp(rec) - nojump_gp(psi))) < 2e-3


def test_nojump_phase_closed_form_vs_sampled():
    for Om, G in [(5e-3, 1e-3), (5e-3, 0.0306), (5e-2, 1e-2)]:
        p = RotatingFieldParams(Omega=Om, theta=0.34 * np.pi)
        closed = nojump_phase(p.theta, Om, G)[0]
        sampled = nojump_phase_sampled(p, JumpChannelSet(Gamma=G))
        assert abs(wrap_phase(closed - sampled)) < 1e-6


def test_expected_jump_count_small_rate():
    # for weak dissipation the count is ∫ Σ_α <psi_+|L†L|psi_+> dt along the adiabatic state
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    ch = JumpChannelSet(Gamma=1e-5)
    T = p.period
    s = np.sin(p.theta)
    # |<psi_-|σx|psi_+>|² = 1 - sin²θ cos²(Ωt) and <psi_+|σx|psi_+> = sinθ cos(Ωt); over a period
    # these average to 1 - sin²θ/2 and sin²θ/2
    approx = T * (ch.gamma_minus * (1 - s**2 / 2) + ch.gamma_d * s**2 / 2)
    assert abs(expected_jump_count(p, ch) - approx) < 0.02 * approx


def test_ensemble_guards_and_unitary_delta():
    p = RotatingFieldParams(Omega=5e-2, theta=0.34 * np.pi)
    with pytest.raises(EmptyEnsemble):
        phase_ensemble(p, JumpChannelSet(Gamma=1e-3), 99, seed=0)
    ens = phase_ensemble(p, JumpChannelSet(Gamma=0.0), 100, seed=0)
    assert np.ptp(ens.phases) < 1e-12
    assert abs(wrap_phase(ens.phases[0] - ens.references["phi_u"])) < 1e-4
    assert ens.discarded == 0


def test_echo_parameter_branch():
    assert abs(echo_parameter(0.5) - 11 * np.pi / 8) < 1e-14
    assert abs(echo_parameter(1.0) - 1.5 * np.pi) < 1e-14
    assert abs(echo_parameter(0.0) - 1.25 * np.pi) < 1e-14
    phi = echo_parameter(np.linspace(0, 1, 11))
    assert np.allclose(np.cos(2 * phi) ** 2, np.linspace(0, 1, 11))


def test_singularity_root_and_orthogonality():
    theta = 0.34 * np.pi
    Om, G = find_singularity(theta)
    assert abs(singularity_condition(Om, G, theta)[0]) < 1e-10
    p = RotatingFieldParams(Omega=Om, theta=theta)
    psi, _ = nojump_state_analytic(p, JumpChannelSet(Gamma=G), p.period)
    assert abs(np.vdot(instantaneous_eigenstates(p, 0.0)[0], psi)) < 1e-6


def test_no_root_without_dissipation():
    best, _, _ = scan_for_roots(0.34 * np.pi, np.linspace(4e-3, 6e-3, 2001), [0.0])
    assert best > 1.0


def test_adiabatic_region_winding():
    scan = topo_scan(Omega=1e-4, Gamma=0.0)
    assert scan.n == -1
    assert scan.phi0[0] == 0.0
    assert np.max(np.abs(wrap_phase(np.diff(scan.phi0)))) < 0.5


@pytest.mark.slow
def test_winding_changes_by_one_across_the_root():
    Om, G = find_singularity(0.34 * np.pi)
    left = topo_scan(Omega=Om - 1e-6, Gamma=G)
    right = topo_scan(Omega=Om + 1e-6, Gamma=G)
    assert abs(left.n - right.n) == 1
    assert abs(abs(winding_difference(left, right)) - 1) < 1e-3
