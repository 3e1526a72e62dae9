"""Monitored dynamics of the driven spin: quantum jumps, no-jump drift and topology.

The field is the rotating one of ``spin``. Four jump channels act in the
instantaneous eigenbasis psi_±(t):

    L_minus = sqrt(g_minus) <psi_-|σx|psi_+> |psi_-><psi_+|
    L_plus  = sqrt(g_plus)  <psi_+|σx|psi_-> |psi_+><psi_-|
    L_d     = sqrt(g_d) Σ_i <psi_i|σx|psi_i> |psi_i><psi_i|
    L_z     = sqrt(g_z) σz

Trajectories are generated in vectorized batches. Trajectory ``i`` of a run
with master seed ``s`` always draws its uniforms from its own Philox stream
keyed by ``(s, i)``, so results do not depend on batch size or thread count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DomainError, EmptyEnsemble, NoConvergence, OrthogonalEndpoints,
                     SingularPath, StepTooLarge)
from .phasefun import ORTHO_TOL, TrajectoryRecord, make_distribution, nojump_gp, wrap_phase
from .qcore import SIGMA_Z, evolve_lindblad, integrate_ode
from .spin import (RotatingFieldParams, berry_phase, default_samples, hamiltonian,
                   instantaneous_eigenstates, kinematic_gp_numeric, reversed_params)

CHANNELS = ("minus", "plus", "dephasing", "z")
MAX_STEP_PROBABILITY = 1e-2
DISCARD_LIMIT = 0.01
STEPS_PER_PERIOD = 20000


@dataclass(frozen=True)
class JumpChannelSet:
    """Jump rates in units of omega. ``None`` picks the default tied to ``Gamma``."""
    Gamma: float
    gamma_minus: float = None
    gamma_plus: float = 0.0
    gamma_d: float = None
    gamma_z: float = 0.0

    def __post_init__(self):
        if self.gamma_minus is None:
            object.__setattr__(self, "gamma_minus", float(self.Gamma))
        if self.gamma_d is None:
            object.__setattr__(self, "gamma_d", 0.32 * float(self.Gamma))
        for name in ("Gamma", "gamma_minus", "gamma_plus", "gamma_d", "gamma_z"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be non-negative")

    @property
    def rates(self):
        return (self.gamma_minus, self.gamma_plus, self.gamma_d, self.gamma_z)

    @property
    def max_rate(self):
        return max(self.rates)


def _outer(a, b):
    return a[..., :, None] * b.conj()[..., None, :]


def _sx_element(bra, k):
    # <bra|σx|k> for stacked 2-vectors
    return bra[..., 0].conj() * k[..., 1] + bra[..., 1].conj() * k[..., 0]


def jump_operator_stack(p, ch, t):
    """Jump operators at each time in ``t``; shape (4, len(t), 2, 2) in CHANNELS order."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    plus, minus, _, _ = instantaneous_eigenstates(p, t)
    g_m, g_p, g_d, g_z = ch.rates
    ops = np.zeros((4, len(t), 2, 2), dtype=complex)
    ops[0] = np.sqrt(g_m) * _sx_element(minus, plus)[:, None, None] * _outer(minus, plus)
    ops[1] = np.sqrt(g_p) * _sx_element(plus, minus)[:, None, None] * _outer(plus, minus)
    ops[2] = np.sqrt(g_d) * (_sx_element(plus, plus)[:, None, None] * _outer(plus, plus)
                             + _sx_element(minus, minus)[:, None, None] * _outer(minus, minus))
    ops[3] = np.sqrt(g_z) * SIGMA_Z
    return ops


def build_jump_operators(p, ch, t):
    """[L_minus, L_plus, L_d, L_z] at a single time."""
    return list(jump_operator_stack(p, ch, float(t))[:, 0])


def effective_hamiltonian(p, ch, t):
    """H(t) - (i/2) Σ L†L, stacked over the times in ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ops = jump_operator_stack(p, ch, t)
    decay = np.einsum("ktji,ktjl->til", ops.conj(), ops)
    h = np.array([hamiltonian(p, x) for x in t]) if len(t) < 8 else _hamiltonian_stack(p, t)
    return h - 0.5j * decay


def _hamiltonian_stack(p, t):
    phi = p.azimuth(t)
    s, c = np.sin(p.theta), np.cos(p.theta)
    h = np.empty((len(t), 2, 2), dtype=complex)
    h[:, 0, 0] = 0.5 * p.omega * c
    h[:, 1, 1] = -0.5 * p.omega * c
    h[:, 0, 1] = 0.5 * p.omega * s * np.exp(-1j * phi)
    h[:, 1, 0] = 0.5 * p.omega * s * np.exp(1j * phi)
    return h


def expm2(a):
    """exp of stacked 2x2 matrices via the traceless split."""
    a = np.asarray(a, dtype=complex)
    half_tr = 0.5 * (a[..., 0, 0] + a[..., 1, 1])
    b = a.copy()
    b[..., 0, 0] -= half_tr
    b[..., 1, 1] -= half_tr
    q = np.sqrt(b[..., 0, 0] ** 2 + b[..., 0, 1] * b[..., 1, 0])
    small = np.abs(q) < 1e-8
    q_safe = np.where(small, 1.0, q)
    sinhc = np.where(small, 1 + q**2 / 6, np.sinh(q_safe) / q_safe)
    out = sinhc[..., None, None] * b
    out[..., 0, 0] += np.cosh(q)
    out[..., 1, 1] += np.cosh(q)
    return np.exp(half_tr)[..., None, None] * out


def no_jump_propagators(p, ch, t_start, dt, propagator="expm"):
    """K_o for each step starting at ``t_start``.

    ``"expm"`` uses exp(-i dt H_eff(t + dt/2)), which keeps the no-jump and jump
    probabilities summing to one up to O((rate·dt)²). ``"first-order"`` is the
    plain 1 - i dt H_eff(t).
    """
    t_start = np.atleast_1d(np.asarray(t_start, dtype=float))
    if propagator == "expm":
        return expm2(-1j * dt * effective_hamiltonian(p, ch, t_start + 0.5 * dt))
    if propagator == "first-order":
        return np.eye(2) - 1j * dt * effective_hamiltonian(p, ch, t_start)
    raise ValueError(f"unknown propagator {propagator!r}")


def default_dt(T, ch, steps=STEPS_PER_PERIOD):
    rate = ch.max_rate
    return min(T / steps, 0.01 / rate) if rate > 0 else T / steps


def _step_probabilities(ops, psi, dt):
    """dt·‖L_α psi‖² for every channel; ``ops`` is (4, 2, 2)."""
    return dt * np.sum(np.abs(ops @ psi) ** 2, axis=-1)


def mc_step(state, t, dt, p, ch, rng, propagator="expm"):
    """One monitored step; returns ``(state', event)`` with event None or a channel name."""
    psi = np.asarray(state, dtype=complex)
    ops = jump_operator_stack(p, ch, t)[:, 0]
    probs = _step_probabilities(ops, psi, dt)
    total = probs.sum()
    if total > MAX_STEP_PROBABILITY:
        raise StepTooLarge(f"jump probability {total:.3e} per step exceeds {MAX_STEP_PROBABILITY}")
    u = rng.random()
    if u < total:
        k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        out = ops[k] @ psi
        return out / np.linalg.norm(out), CHANNELS[k]
    out = no_jump_propagators(p, ch, t, dt, propagator)[0] @ psi
    return out / np.linalg.norm(out), None


def step_bookkeeping(state, t, dt, p, ch, propagator="expm"):
    """p_o + Σ p_α for one step, which should equal one up to O(dt²)."""
    psi = np.asarray(state, dtype=complex)
    ops = jump_operator_stack(p, ch, t)[:, 0]
    k_o = no_jump_propagators(p, ch, t, dt, propagator)[0]
    return float(np.linalg.norm(k_o @ psi) ** 2 + _step_probabilities(ops, psi, dt).sum())


def trajectory_stream(seed, index):
    """Counter-based generator reserved for trajectory ``index`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class _Uniforms:
    """One uniform per step per trajectory, drawn in chunks from per-trajectory streams."""

    def __init__(self, seed, indices, chunk=512):
        self.gens = [trajectory_stream(seed, i) for i in indices]
        self.chunk = chunk
        self.pos = chunk
        self.buf = None

    def next(self):
        if self.pos == self.chunk:
            self.buf = np.stack([g.random(self.chunk) for g in self.gens], axis=1)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


@dataclass
class _Stage:
    """A driven interval [t0, t0 + n·dt] or an instantaneous unitary ``kick``."""
    params: RotatingFieldParams = None
    t0: float = 0.0
    n_steps: int = 0
    dt: float = 0.0
    kick: np.ndarray = None


@dataclass
class BatchResult:
    """Outcome of a batch of trajectories sharing one schedule."""
    indices: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    n_jumps: np.ndarray
    jumps: list
    link_phase: np.ndarray
    defined: np.ndarray
    checkpoint_times: np.ndarray = None
    checkpoint_states: np.ndarray = None  # (n_checkpoints, n_traj, 2)
    history: dict = None

    @property
    def phases(self):
        """Pancharatnam phase of each trajectory; NaN where undefined."""
        closing = np.einsum("ij,ij->i", self.initial.conj(), self.final)
        ok = self.defined & (np.abs(closing) > ORTHO_TOL)
        out = np.full(len(closing), np.nan)
        out[ok] = wrap_phase(np.angle(closing[ok]) - self.link_phase[ok])
        return out


def _run_batch(stages, ch, psi0, seed, indices, checkpoints=(), record=False,
               propagator="expm", allow_jumps=True):
    indices = np.asarray(indices, dtype=np.int64)
    n = len(indices)
    psi0 = np.asarray(psi0, dtype=complex)
    a = np.full(n, psi0[0])
    b = np.full(n, psi0[1])
    link = np.zeros(n)
    defined = np.ones(n, dtype=bool)
    n_jumps = np.zeros(n, dtype=np.int64)
    jumps = [[] for _ in range(n)]
    uniforms = _Uniforms(seed, indices) if allow_jumps else None
    checkpoints = sorted(checkpoints)
    cp_states = []
    hist = None
    if record:
        hist = {"segments": [[psi0.copy()]], "segment_times": [[0.0]], "pre": [], "post": [],
                "terms": [], "every": record if isinstance(record, int) and record > 0 else 1}
    cp_pos = 0
    step_count = 0

    def snapshot(t_now):
        nonlocal cp_pos
        while cp_pos < len(checkpoints) and checkpoints[cp_pos] <= t_now + 1e-9:
            cp_states.append(np.stack([a, b], axis=1).copy())
            cp_pos += 1

    for stage in stages:
        if stage.kick is not None:
            k = stage.kick
            a, b = k[0, 0] * a + k[0, 1] * b, k[1, 0] * a + k[1, 1] * b
            if record:
                # a kick starts a fresh smooth segment with no phase term of its own
                hist["segments"].append([np.array([a[0], b[0]])])
                hist["segment_times"].append([hist["segment_times"][-1][-1]])
            continue
        p, dt = stage.params, stage.dt
        starts = stage.t0 + dt * np.arange(stage.n_steps)
        kos = no_jump_propagators(p, ch, starts, dt, propagator)
        ops = jump_operator_stack(p, ch, starts)
        active = [k for k in range(4) if ch.rates[k] > 0] if allow_jumps else []
        if stage.t0 == 0.0:
            snapshot(0.0)
        for j in range(stage.n_steps):
            t = starts[j]
            na = kos[j, 0, 0] * a + kos[j, 0, 1] * b
            nb = kos[j, 1, 0] * a + kos[j, 1, 1] * b
            jump = None
            if active:
                u = uniforms.next()
                cum = np.zeros(n)
                cums = []
                for k in active:
                    L = ops[k, j]
                    la = L[0, 0] * a + L[0, 1] * b
                    lb = L[1, 0] * a + L[1, 1] * b
                    cum = cum + dt * (la.real**2 + la.imag**2 + lb.real**2 + lb.imag**2)
                    cums.append(cum)
                if cum.max() > MAX_STEP_PROBABILITY:
                    raise StepTooLarge(f"jump probability {cum.max():.3e} per step at t={t:.6g}")
                jump = u < cum
            ov = a.conj() * na + b.conj() * nb
            if jump is not None and jump.any():
                idx = np.nonzero(jump)[0]
                chosen = np.full(len(idx), -1)
                for slot in range(len(active) - 1, -1, -1):
                    chosen[u[idx] < cums[slot][idx]] = active[slot]
                for i, k in zip(idx, chosen):
                    # jump at the start of the step, then drift for the rest of it
                    pre = np.array([a[i], b[i]])
                    post = ops[k, j] @ pre
                    jump_ov = np.vdot(pre, post)
                    if abs(jump_ov) <= ORTHO_TOL * np.linalg.norm(post):
                        defined[i] = False
                    post = post / np.linalg.norm(post)
                    moved = kos[j] @ post
                    na[i], nb[i] = moved
                    link[i] += np.angle(jump_ov) + np.angle(np.vdot(post, moved))
                    jumps[i].append((float(t), CHANNELS[k]))
                    n_jumps[i] += 1
                    if record:
                        hist["segments"][-1].append(pre)
                        hist["segment_times"][-1].append(float(t))
                        hist["pre"].append(pre)
                        hist["post"].append(post)
                        hist["terms"].append(float(np.angle(jump_ov)))
                        hist["segments"].append([post])
                        hist["segment_times"].append([float(t)])
                smooth = np.ones(n, dtype=bool)
                smooth[idx] = False
                link[smooth] += np.angle(ov[smooth])
            else:
                link += np.angle(ov)
            norm = np.sqrt(na.real**2 + na.imag**2 + nb.real**2 + nb.imag**2)
            a, b = na / norm, nb / norm
            step_count += 1
            t_next = t + dt
            if record and (step_count % hist["every"] == 0 or j == stage.n_steps - 1
                           or (jump is not None and jump[0])):
                hist["segments"][-1].append(np.array([a[0], b[0]]))
                hist["segment_times"][-1].append(float(t_next))
            if checkpoints:
                snapshot(t_next)
    return BatchResult(indices=indices, initial=np.tile(psi0, (n, 1)), final=np.stack([a, b], axis=1),
                       n_jumps=n_jumps, jumps=jumps, link_phase=link, defined=defined,
                       checkpoint_times=np.array(checkpoints[:len(cp_states)]),
                       checkpoint_states=np.array(cp_states) if cp_states else None, history=hist)


def _cycle_stages(p, ch, T, dt, echo=False):
    dt = dt or default_dt(T, ch)
    n_steps = int(np.ceil(T / dt - 1e-9))
    dt = T / n_steps
    stages = [_Stage(params=p, t0=0.0, n_steps=n_steps, dt=dt)]
    if echo:
        plus, minus, _, _ = instantaneous_eigenstates(p, T)
        swap = np.outer(plus, minus.conj()) + np.outer(minus, plus.conj())
        stages.append(_Stage(kick=swap))
        stages.append(_Stage(params=reversed_params(p), t0=T, n_steps=n_steps, dt=dt))
    return stages, dt


def _initial_state(p, echo):
    plus, minus, _, _ = instantaneous_eigenstates(p, 0.0)
    return (plus + minus) / np.sqrt(2) if echo else plus


def run_batch(p, ch, n_traj, seed, T=None, dt=None, echo=False, first_index=0, threads=1,
              checkpoints=(), propagator="expm", block=2000):
    """Run ``n_traj`` trajectories with indices first_index, first_index+1, ...

    Blocks of ``block`` trajectories are independent and may run on ``threads``
    worker threads; the merged result is identical for any thread count.
    """
    T = p.period if T is None else T
    stages, _ = _cycle_stages(p, ch, T, dt, echo)
    psi0 = _initial_state(p, echo)
    all_idx = np.arange(first_index, first_index + n_traj)
    blocks = [all_idx[i:i + block] for i in range(0, n_traj, block)]

    def work(idx):
        return _run_batch(stages, ch, psi0, seed, idx, checkpoints=checkpoints, propagator=propagator)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(idx) for idx in blocks]
    cps = [q.checkpoint_states for q in parts]
    return BatchResult(
        indices=np.concatenate([q.indices for q in parts]),
        initial=np.concatenate([q.initial for q in parts]),
        final=np.concatenate([q.final for q in parts]),
        n_jumps=np.concatenate([q.n_jumps for q in parts]),
        jumps=[j for q in parts for j in q.jumps],
        link_phase=np.concatenate([q.link_phase for q in parts]),
        defined=np.concatenate([q.defined for q in parts]),
        checkpoint_times=parts[0].checkpoint_times,
        checkpoint_states=None if cps[0] is None else np.concatenate(cps, axis=1),
    )


def run_trajectory(p, ch, T=None, dt=None, seed=0, index=0, sample_every=1, echo=False,
                   propagator="expm", allow_jumps=True):
    """One monitored realization as a TrajectoryRecord.

    States are stored every ``sample_every`` steps plus at every jump. The
    streamed phase accumulated step by step is kept in ``streamed_phase``.
    """
    T = p.period if T is None else T
    stages, dt = _cycle_stages(p, ch, T, dt, echo)
    psi0 = _initial_state(p, echo)
    res = _run_batch(stages, ch, psi0, seed, [index], record=int(sample_every),
                     propagator=propagator, allow_jumps=allow_jumps)
    h = res.history
    phase = res.phases[0]
    return TrajectoryRecord(
        jump_times=[t for t, _ in res.jumps[0]],
        jump_channels=[c for _, c in res.jumps[0]],
        segments=[np.array(s) for s in h["segments"]],
        segment_times=[np.array(s) for s in h["segment_times"]],
        jump_pre_states=h["pre"], jump_post_states=h["post"], jump_terms=h["terms"],
        seed=int(seed), index=int(index), streamed_phase=float(phase),
        meta={"dt": dt, "T": T, "echo": echo, "params": p, "channels": ch},
    )


def nojump_path(p, ch, T=None, dt=None, sample_every=1, propagator="expm"):
    """The record with every jump suppressed: pure drift under K_o."""
    return run_trajectory(p, ch, T=T, dt=dt, sample_every=sample_every,
                          propagator=propagator, allow_jumps=False)


# ---------------------------------------------------------------- no-jump drift

def _mean_field_omega(p, ch):
    """Complex level splitting ω - i(γ_- - γ_+) f̄/2 with f̄ = 1 - sin²θ/2."""
    fbar = 1 - 0.5 * np.sin(p.theta) ** 2
    return p.omega - 0.5j * (ch.gamma_minus - ch.gamma_plus) * fbar


def _trace_decay(p, ch, t):
    """∫_0^t of the identity part of (1/2) Σ L†L, with f and cos² integrated exactly."""
    t = np.asarray(t, dtype=float)
    s2, c2 = np.sin(p.theta) ** 2, np.cos(p.theta) ** 2
    Om = p.Omega
    osc = np.sin(2 * Om * t) / (4 * Om) if Om != 0 else 0.5 * t
    int_f = c2 * t + s2 * (0.5 * t - osc)
    int_cos2 = 0.5 * t + osc
    return (0.25 * (ch.gamma_minus + ch.gamma_plus) * int_f
            + 0.5 * ch.gamma_d * s2 * int_cos2 + 0.5 * ch.gamma_z * t)


def nojump_state_analytic(p, ch, t):
    """Closed-form no-jump state from psi_+(0) under the mean-field drift.

    Returns ``(normalized state, norm)``. The norm includes the isotropic decay
    of all channels so that norm² approximates the no-jump probability.
    """
    t = np.asarray(t, dtype=float)
    w = _mean_field_omega(p, ch)
    Om, th, d = p.Omega, p.theta, p.direction
    nu = w - d * Om * np.cos(th)
    eps = np.sqrt(nu**2 + (Om * np.sin(th)) ** 2)
    sn = np.sin(eps * t / 2)
    plus, minus, _, _ = instantaneous_eigenstates(p, t)
    pref = np.exp(-1j * d * Om * t / 2)
    ca = pref * (np.cos(eps * t / 2) - 1j * nu * sn / eps)
    cb = pref * 1j * d * Om * np.sin(th) * sn / eps
    psi = ca[..., None] * plus + cb[..., None] * minus
    raw = np.linalg.norm(psi, axis=-1)
    norm = raw * np.exp(-_trace_decay(p, ch, t))
    return psi / raw[..., None], norm


def nojump_state_numeric(p, ch, t_samples, rtol=1e-10, atol=1e-12):
    """Unnormalized no-jump state from integrating i dψ/dt = H_eff(t) ψ with the full f(t)."""
    t_samples = np.asarray(t_samples, dtype=float)
    psi0 = instantaneous_eigenstates(p, 0.0)[0]

    def rhs(t, y):
        return -1j * (effective_hamiltonian(p, ch, t)[0] @ y)

    sol = integrate_ode(rhs, psi0, (t_samples[0], t_samples[-1]), t_samples, rtol=rtol, atol=atol)
    return sol.y


def nojump_phase_sampled(p, ch, n_samples=None):
    """Kinematic phase of the sampled analytic no-jump path over one period."""
    if n_samples is None:
        n_samples = default_samples(p)
    t = np.linspace(0.0, p.period, n_samples)
    psi, _ = nojump_state_analytic(p, ch, t)
    return nojump_gp(psi)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def nojump_phase(theta, Omega, Gamma, omega=1.0, gamma_plus=0.0, closing_tol=0.0):
    """No-jump phase over one period from the rotating-frame closed form.

    In the frame co-rotating with the field the mean-field drift is a constant
    2x2 matrix K, so χ(t) = exp(-iKt) χ0. The dynamical term is the integral of
    <χ|M|χ>/<χ|χ> with M = (Ω/2)σz + (K + K†)/2, done with Gauss–Legendre panels.
    Returns ``(phase, |<psi(0)|psi(T)>|)``.
    """
    p = RotatingFieldParams(Omega=Omega, theta=theta, omega=omega)
    ch = JumpChannelSet(Gamma=Gamma, gamma_plus=gamma_plus)
    w = _mean_field_omega(p, ch)
    c, s = np.cos(theta), np.sin(theta)
    K = 0.5 * np.array([[w * c - Omega, w * s], [w * s, -(w * c - Omega)]], dtype=complex)
    M = 0.5 * Omega * SIGMA_Z + 0.5 * (K + K.conj().T)
    lam, V = np.linalg.eig(K)
    chi0 = np.array([np.cos(theta / 2), np.sin(theta / 2)], dtype=complex)
    alpha = np.linalg.solve(V, chi0)
    T = p.period
    gap = abs((lam[0] - lam[1]).real)
    panel = 4 * np.pi / max(gap, Omega, 1e-12)
    n_panels = int(np.ceil(T / panel))
    edges = np.linspace(0.0, T, n_panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    tt = (mid[:, None] + half[:, None] * _GL_X).ravel()
    ww = (half[:, None] * _GL_W).ravel()
    expo = -1j * lam[None, :] * tt[:, None]
    expo -= expo.real.max(axis=1, keepdims=True)
    coef = alpha * np.exp(expo)
    chi = coef @ V.T
    num = np.einsum("ti,ij,tj->t", chi.conj(), M, chi).real
    den = np.einsum("ti,ti->t", chi.conj(), chi).real
    dyn = np.sum(ww * num / den)
    # closing overlap with the same normalization
    expoT = -1j * lam * T
    chiT = (alpha * np.exp(expoT - expoT.real.max())) @ V.T
    chiT = chiT / np.linalg.norm(chiT)
    closing = -np.vdot(chi0, chiT)
    mag = abs(closing)
    if mag <= closing_tol:
        raise OrthogonalEndpoints(f"return amplitude {mag:.2e} at theta={theta:.6g}")
    return wrap_phase(np.angle(closing) + dyn), float(mag)


# ---------------------------------------------------------------- ensembles

@dataclass
class PhaseEnsemble:
    """Distribution of trajectory phases plus reference values."""
    distribution: object
    phases: np.ndarray
    n_jumps: np.ndarray
    discarded: int
    references: dict = field(default_factory=dict)

    @property
    def mean_jumps(self):
        return float(self.n_jumps.mean())

    @property
    def jump_error(self):
        return float(self.n_jumps.std(ddof=1) / np.sqrt(len(self.n_jumps)))


def _check_ensemble(n_traj):
    if int(n_traj) < 100:
        raise EmptyEnsemble("an ensemble needs at least 100 trajectories")


def _kept(values, discarded, n_traj):
    if discarded >= DISCARD_LIMIT * n_traj:
        raise EmptyEnsemble(f"{discarded} of {n_traj} trajectories had undefined phases")
    return values


def phase_ensemble(p, ch, n_traj, seed, n_bins=64, dt=None, threads=1):
    """Phases of ``n_traj`` monitored periods started in psi_+(0)."""
    _check_ensemble(n_traj)
    res = run_batch(p, ch, n_traj, seed, dt=dt, threads=threads)
    phases = res.phases
    ok = np.isfinite(phases)
    discarded = int((~ok).sum())
    _kept(phases, discarded, n_traj)
    dist = make_distribution(phases[ok], n_bins)
    refs = {
        "phi_a": float(wrap_phase(berry_phase(p.theta, "+"))),
        "phi_0": nojump_phase(p.theta, p.Omega, ch.gamma_minus, p.omega, ch.gamma_plus)[0],
        "phi_u": kinematic_gp_numeric(replace(p, direction=1)),
        "phi_bar": dist.circular_mean,
    }
    return PhaseEnsemble(dist, phases, res.n_jumps, discarded, refs)


def echo_parameter(persistence, top=1.5 * np.pi):
    """φ̃ with cos²(2φ̃) = P on the quarter period just below ``top``."""
    P = np.clip(np.asarray(persistence, dtype=float), 0.0, 1.0)
    return top - 0.5 * np.arccos(np.sqrt(P))


@dataclass
class EchoEnsemble:
    distribution: object
    echo_parameters: np.ndarray
    persistence: np.ndarray
    n_jumps: np.ndarray
    jump_classes: list
    discarded: int = 0


def _jump_class(jumps):
    names = {c for _, c in jumps}
    if not names:
        return "none"
    if names & {"minus", "plus"}:
        return "relaxation"
    return "dephasing" if names == {"dephasing"} else "other"


def echo_ensemble(p, ch, n_traj, seed, n_bins=64, dt=None, threads=1, top=1.5 * np.pi):
    """Echo-parameter distribution of the monitored two-cycle echo."""
    _check_ensemble(n_traj)
    res = run_batch(p, ch, n_traj, seed, dt=dt, echo=True, threads=threads)
    P = np.abs(np.einsum("ij,ij->i", res.initial.conj(), res.final)) ** 2
    phi = echo_parameter(P, top)
    dist = make_distribution(wrap_phase(phi), n_bins)
    return EchoEnsemble(dist, phi, P, res.n_jumps, [_jump_class(j) for j in res.jumps])


# ---------------------------------------------------------------- Lindblad oracles

def lindblad_operators(p, ch):
    def h_of_t(t):
        return hamiltonian(p, t)

    def l_of_t(t):
        return [L for L, r in zip(build_jump_operators(p, ch, t), ch.rates) if r > 0]

    return h_of_t, l_of_t


def lindblad_evolution(p, ch, t_samples, psi0=None):
    """Density matrices from the master equation with the same H and L_α."""
    psi0 = instantaneous_eigenstates(p, 0.0)[0] if psi0 is None else np.asarray(psi0)
    h, ls = lindblad_operators(p, ch)
    return evolve_lindblad(h, ls, np.outer(psi0, psi0.conj()), t_samples, rtol=1e-10, atol=1e-13)


def expected_jump_count(p, ch, T=None, psi0=None):
    """Mean number of jumps over [0, T]: ∫ Σ_α Tr(L_α ρ L_α†) dt along the master equation."""
    T = p.period if T is None else T
    psi0 = instantaneous_eigenstates(p, 0.0)[0] if psi0 is None else np.asarray(psi0)
    h, ls = lindblad_operators(p, ch)

    def rhs(t, y):
        rho = y[:4].reshape(2, 2)
        ops = ls(t)
        out = -1j * (h(t) @ rho - rho @ h(t))
        rate = 0.0
        for L in ops:
            Ld = L.conj().T
            jump = L @ rho @ Ld
            out += jump - 0.5 * (Ld @ L @ rho + rho @ Ld @ L)
            rate += np.trace(jump)
        return np.concatenate([out.ravel(), [rate]])

    y0 = np.concatenate([np.outer(psi0, psi0.conj()).ravel(), [0.0]]).astype(complex)
    sol = integrate_ode(rhs, y0, (0.0, T), rtol=1e-10, atol=1e-13)
    return float(sol.y[-1, 4].real)


def unraveling_check(p, ch, n_traj, seed, checkpoints_per_period=10, n_boot=200, threads=1):
    """Compare the trajectory-averaged state with the master equation.

    Returns ``(times, distances, errors)`` where ``errors`` is the bootstrap
    standard deviation of the trace distance between resampled and full means.
    """
    T = p.period
    times = T * np.arange(1, checkpoints_per_period + 1) / checkpoints_per_period
    res = run_batch(p, ch, n_traj, seed, checkpoints=times, threads=threads)
    states = res.checkpoint_states  # (n_cp, n_traj, 2)
    rhos = lindblad_evolution(p, ch, np.concatenate([[0.0], times]))[1:]
    rng = np.random.default_rng(seed)
    boot = rng.integers(0, n_traj, size=(n_boot, n_traj))
    dist, err = [], []
    for k in range(len(times)):
        psi = states[k]
        bloch = np.stack([2 * (psi[:, 0].conj() * psi[:, 1]).real,
                          2 * (psi[:, 0].conj() * psi[:, 1]).imag,
                          np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2], axis=1)
        mean = bloch.mean(axis=0)
        r = rhos[k]
        ref = np.array([2 * r[1, 0].real, 2 * r[1, 0].imag, (r[0, 0] - r[1, 1]).real])
        dist.append(0.5 * np.linalg.norm(mean - ref))
        reps = bloch[boot].mean(axis=1)
        err.append(np.sqrt(np.mean(np.sum((reps - mean) ** 2, axis=1))) * 0.5)
    return times, np.array(dist), np.array(err)


# ---------------------------------------------------------------- topology

def _refine(f, a, b, fa, fb, depth, max_depth, jump):
    """Insert midpoints until successive wrapped differences stay below ``jump``."""
    if abs(wrap_phase(fb - fa)) < jump:
        return [(b, fb)]
    if depth >= max_depth:
        raise SingularPath(f"phase jumps by {abs(wrap_phase(fb - fa)):.3f} within "
                           f"[{a:.12g}, {b:.12g}]; a singular point lies on the path")
    m = 0.5 * (a + b)
    fm = f(m)
    return (_refine(f, a, m, fa, fm, depth + 1, max_depth, jump)
            + _refine(f, m, b, fm, fb, depth + 1, max_depth, jump))


@dataclass
class TopoScan:
    theta: np.ndarray
    phi0: np.ndarray  # unwrapped, phi0[0] = 0
    n: int
    Omega: float
    Gamma: float

    def at(self, theta):
        return np.interp(theta, self.theta, self.phi0)


def default_theta_grid(n_linear=257, decades=14, per_decade=32):
    """Uniform grid on [0, π] plus log-spaced points approaching both poles.

    With strong damping the no-jump phase winds within θ ~ 1e-8..1e-5 of the
    poles, where the amplified psi_- admixture overtakes psi_+. The winding there
    reaches several turns per decade, so sparser pole grids alias whole turns.
    """
    near = np.logspace(-decades, -1, decades * per_decade + 1)
    grid = np.concatenate([np.linspace(0.0, np.pi, n_linear), near, np.pi - near])
    return np.unique(grid)


def topo_scan(theta_grid=None, Omega=4.8e-3, Gamma=0.0306, omega=1.0, max_depth=40,
              max_step=0.5):
    """Unwrapped no-jump phase φ0(θ) from θ = 0 to π and its winding n = φ0(π)/2π.

    Intervals are bisected until successive phases differ by less than
    ``max_step`` (below π/2, so a full winding cannot hide between samples).
    """
    theta_grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, float)

    def f(th):
        val, mag = nojump_phase(th, Omega, Gamma, omega)
        if mag < 1e-10:
            raise SingularPath(f"return amplitude {mag:.2e} at theta={th:.12g}")
        return val

    pts = [(theta_grid[0], f(theta_grid[0]))]
    for b in theta_grid[1:]:
        a, fa = pts[-1]
        pts.extend(_refine(f, a, b, fa, f(b), 0, max_depth, max_step))
    th = np.array([x for x, _ in pts])
    raw = np.array([y for _, y in pts])
    phi = np.concatenate([[0.0], np.cumsum(wrap_phase(np.diff(raw)))])
    if theta_grid[0] > 0:
        phi += raw[0]
    return TopoScan(th, phi, int(np.rint(phi[-1] / (2 * np.pi))), Omega, Gamma)


def winding_difference(scan1, scan2, theta=None):
    """Δ(θ) = (φ0⁽¹⁾(θ) - φ0⁽²⁾(θ)) / 2π; at θ = π by default."""
    theta = np.pi if theta is None else theta
    return float((scan1.at(theta) - scan2.at(theta)) / (2 * np.pi))


def singularity_condition(Omega, Gamma, theta, omega=1.0):
    """(ν+ε) - (ν-ε) e^{2iπε/Ω} and its derivatives in Ω and Γ."""
    c, s = np.cos(theta), np.sin(theta)
    g = 1 - 0.5 * s * s
    nu = omega - Omega * c - 0.5j * Gamma * g
    eps = np.sqrt(nu * nu + (Omega * s) ** 2)
    E = np.exp(2j * np.pi * eps / Omega)
    F = (nu + eps) - (nu - eps) * E
    nu_O, nu_G = -c, -0.5j * g
    eps_O = (nu * nu_O + Omega * s * s) / eps
    eps_G = nu * nu_G / eps
    E_O = E * 2j * np.pi * (eps_O * Omega - eps) / Omega**2
    E_G = E * 2j * np.pi * eps_G / Omega
    F_O = (nu_O + eps_O) - (nu_O - eps_O) * E - (nu - eps) * E_O
    F_G = (nu_G + eps_G) - (nu_G - eps_G) * E - (nu - eps) * E_G
    return F, F_O, F_G


def find_singularity(theta, bounds=((4.795e-3, 4.82e-3), (0.0300, 0.0312)), start=None,
                     omega=1.0, tol=1e-10, max_iter=200):
    """Root (Ω/ω, Γ/ω) of the endpoint-orthogonality condition by damped Newton.

    Roots come in families spaced by about Ω²/ω in Ω, one per winding of the
    exponential, so ``bounds`` should bracket a single one. Newton starts at the
    centre of ``bounds`` unless ``start`` is given and stays inside the box.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x = 0.5 * (lo + hi) if start is None else np.array(start, dtype=float)

    def resid(v):
        return singularity_condition(v[0], v[1], theta, omega)

    F, FO, FG = resid(x)
    for _ in range(max_iter):
        if abs(F) < tol:
            return float(x[0]), float(x[1])
        J = np.array([[FO.real, FG.real], [FO.imag, FG.imag]])
        step = np.linalg.solve(J, -np.array([F.real, F.imag]))
        lam = 1.0
        while lam > 1e-8:
            trial = np.clip(x + lam * step, lo, hi)
            Ft = resid(trial)
            if abs(Ft[0]) < abs(F):
                break
            lam *= 0.5
        else:
            raise NoConvergence(f"line search stalled at {x} with residual {abs(F):.2e}")
        x = trial
        F, FO, FG = Ft
    if abs(F) < tol:
        return float(x[0]), float(x[1])
    raise NoConvergence(f"no root after {max_iter} iterations; residual {abs(F):.2e}")


def scan_for_roots(theta, Omega_values, Gamma_values, omega=1.0):
    """Grid minimum of |F|, useful to confirm a window has no root."""
    O, G = np.meshgrid(np.asarray(Omega_values, float), np.asarray(Gamma_values, float))
    F = singularity_condition(O, G, theta, omega)[0]
    k = np.unravel_index(np.argmin(np.abs(F)), F.shape)
    return float(np.abs(F)[k]), float(O[k]), float(G[k])
