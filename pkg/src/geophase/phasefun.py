"""Gauge-invariant phase functionals and circular statistics.

Every continuum integral of the form Im ∫<psi|dpsi/dt> dt is replaced by the
Pancharatnam sum of ``arg <psi_k|psi_{k+1}>`` over consecutive samples. The sum
is invariant under independent rephasing of each sample, so eigenvector
gauges never need fixing.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import (CoarsePath, DegenerateSpectrum, EmptyEnsemble, OrthogonalEndpoints,
                     OrthogonalStates, RankMismatch)
from .qcore import eig_hermitian, track_branch, track_branches

ORTHO_TOL = 1e-12
COARSE_OVERLAP = 0.9


def wrap_phase(phi):
    """Reduce to (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    out = np.pi - np.mod(np.pi - phi, 2 * np.pi)
    return out if out.ndim else float(out)


def _as_states(states):
    arr = np.asarray(states, dtype=complex)
    if arr.ndim != 2:
        raise ValueError("expected an (N, dim) array of state vectors")
    return arr


def pancharatnam_pair(a, b, tol=ORTHO_TOL):
    """arg <a|b>, defined whenever the normalized overlap exceeds ``tol``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    ov = np.vdot(a, b)
    if abs(ov) <= tol * np.linalg.norm(a) * np.linalg.norm(b):
        raise OrthogonalStates("states are orthogonal, Pancharatnam phase undefined")
    return float(np.angle(ov))


def link_overlaps(states):
    """Consecutive overlaps <psi_k|psi_{k+1}> for an (N, dim) array."""
    states = _as_states(states)
    return np.einsum("ij,ij->i", states[:-1].conj(), states[1:])


def _normalized(states):
    return states / np.linalg.norm(states, axis=1)[:, None]


def discrete_chain_phase(states, tol=ORTHO_TOL):
    """arg<psi_1|psi_N> - arg(<psi_1|psi_2> ... <psi_{N-1}|psi_N>), in (-pi, pi]."""
    states = _normalized(_as_states(states))
    if len(states) < 2:
        raise ValueError("need at least two states")
    links = link_overlaps(states)
    bad = np.nonzero(np.abs(links) <= tol)[0]
    if bad.size:
        raise OrthogonalStates(f"link {bad[0]}->{bad[0] + 1} has vanishing overlap")
    closing = np.vdot(states[0], states[-1])
    if abs(closing) <= tol:
        raise OrthogonalEndpoints("first and last states are orthogonal")
    return wrap_phase(np.angle(closing) - np.angle(links).sum())


def dynamical_sum(states):
    """Discrete estimate of Im ∫<psi|dpsi>/<psi|psi>, unwrapped (not reduced)."""
    return float(np.angle(link_overlaps(_normalized(_as_states(states)))).sum())


def kinematic_gp(states, tol=ORTHO_TOL, check_resolution=True):
    """Total phase minus dynamical phase of a sampled path of normalized states.

    ``states`` is an (N, dim) array or an object with a ``states`` attribute.
    """
    states = getattr(states, "states", states)
    states = _normalized(_as_states(states))
    closing = np.vdot(states[0], states[-1])
    if abs(closing) <= tol:
        raise OrthogonalEndpoints("endpoint overlap vanishes")
    links = link_overlaps(states)
    if check_resolution and np.any(np.abs(links) <= COARSE_OVERLAP):
        k = int(np.argmin(np.abs(links)))
        raise CoarsePath(f"overlap {abs(links[k]):.3f} between samples {k} and {k + 1}")
    return wrap_phase(np.angle(closing) - np.angle(links).sum())


def nojump_gp(states, tol=ORTHO_TOL, check_resolution=True):
    """Kinematic phase of a path whose norm may drift (non-Hermitian drive)."""
    return kinematic_gp(states, tol=tol, check_resolution=check_resolution)


@dataclass(frozen=True)
class StatePath:
    times: np.ndarray
    states: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        norms = np.linalg.norm(self.states, axis=1)
        if np.any(norms <= 1e-12):
            raise ValueError("StatePath contains a zero-norm state")


def tong_gp(rho_path, pure=None, initial_state=None):
    """Mixed-state geometric phase from a list of ``(time, rho)`` pairs.

    With a rank-1 initial state (auto-detected, or forced with ``pure=True``)
    only the branch continuous with that state contributes and the result is
    the kinematic phase of the tracked eigenvector. Otherwise every branch
    with non-zero initial and final weight is followed.
    """
    times = [t for t, _ in rho_path]
    rhos = [np.asarray(r, dtype=complex) for _, r in rho_path]
    vals0, vecs0 = eig_hermitian(rhos[0])
    rank = int(np.sum(vals0 > 1e-10))
    if pure is None:
        pure = rank == 1
    if pure:
        if rank > 1:
            raise RankMismatch(f"pure-state variant requested but initial rank is {rank}")
        start = vecs0[:, 0] if initial_state is None else initial_state
        _, vals, vecs = track_branch(list(zip(times, rhos)), start)
        if np.min(vals) <= 1e-12:
            raise DegenerateSpectrum("tracked eigenvalue reached zero")
        return kinematic_gp(vecs, check_resolution=False)
    tracked = track_branches(list(zip(times, rhos)))
    for vals in tracked.values:
        nz = vals[vals > 1e-10]
        if nz.size > 1 and np.min(np.abs(np.diff(nz))) < 1e-9:
            raise DegenerateSpectrum("non-zero eigenvalues are degenerate along the path")
    total = 0j
    for k in range(tracked.values.shape[1]):
        w = np.sqrt(max(tracked.values[0, k], 0.0) * max(tracked.values[-1, k], 0.0))
        if w <= 0:
            continue
        vecs = tracked.branch(k)
        closing = np.vdot(vecs[0], vecs[-1])
        total += w * closing * np.exp(-1j * np.angle(link_overlaps(vecs)).sum())
    if abs(total) <= ORTHO_TOL:
        raise OrthogonalEndpoints("weighted branch overlaps cancel")
    return float(np.angle(total))


@dataclass
class TrajectoryRecord:
    """One monitored realization.

    ``segments`` holds the sampled smooth pieces; each ends on the state just
    before a jump (or at the final time) and the next one starts on the
    post-jump state. ``jump_terms[i]`` is ``arg <pre|K_alpha|pre>``.
    """
    jump_times: list
    jump_channels: list
    segments: list
    segment_times: list
    jump_pre_states: list
    jump_post_states: list
    jump_terms: list
    seed: int = 0
    index: int = 0
    streamed_phase: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def n_jumps(self):
        return len(self.jump_times)

    @property
    def initial_state(self):
        return self.segments[0][0]

    @property
    def final_state(self):
        return self.segments[-1][-1]


def trajectory_gp(record, tol=ORTHO_TOL):
    """Total phase minus smooth dynamical terms minus jump terms for one record.

    Segment samples may carry any gauge: they are tied to the stored pre- and
    post-jump states, so independent rephasings of the samples cancel.
    """
    psi0 = np.asarray(record.initial_state)
    psiT = np.asarray(record.final_state)
    closing = np.vdot(psi0, psiT)
    if abs(closing) <= tol * np.linalg.norm(psi0) * np.linalg.norm(psiT):
        raise OrthogonalEndpoints("trajectory endpoints are orthogonal")
    smooth = 0.0
    for seg in record.segments:
        if len(seg) > 1:
            links = link_overlaps(_normalized(_as_states(seg)))
            if np.any(np.abs(links) <= tol):
                raise OrthogonalStates("vanishing overlap inside a smooth segment")
            smooth += np.angle(links).sum()
    jumps = float(np.sum(record.jump_terms)) if record.jump_terms else 0.0
    # tie each segment's sampled gauge to the stored jump states the terms refer to
    for i, (pre, post) in enumerate(zip(record.jump_pre_states, record.jump_post_states)):
        jumps += pancharatnam_pair(post, record.segments[i + 1][0], tol)
        jumps -= pancharatnam_pair(pre, record.segments[i][-1], tol)
    return wrap_phase(np.angle(closing) - smooth - jumps)


@dataclass(frozen=True)
class PhaseDistribution:
    """Normalized histogram over [-pi, pi) plus the sample resultant."""
    bin_edges: np.ndarray
    counts: np.ndarray
    sample_count: int
    resultant: complex

    @property
    def weights(self):
        return self.counts / self.counts.sum()

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def circular_mean(self):
        return float(np.angle(self.resultant))

    @property
    def mean_resultant_length(self):
        return abs(self.resultant) / self.sample_count

    @property
    def binned_circular_mean(self):
        return float(np.angle(np.sum(self.weights * np.exp(1j * self.bin_centers))))

    def merge(self, other):
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different bins")
        return PhaseDistribution(self.bin_edges, self.counts + other.counts,
                                 self.sample_count + other.sample_count,
                                 self.resultant + other.resultant)


def bin_index(phi, n_bins):
    """Bin of each phase on a uniform partition of [-pi, pi)."""
    shifted = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi)
    return np.minimum((shifted / (2 * np.pi) * n_bins).astype(int), n_bins - 1)


def make_distribution(phases, n_bins=64):
    phases = np.asarray(phases, dtype=float).ravel()
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if phases.size == 0:
        raise EmptyEnsemble("no phases supplied")
    edges = np.linspace(-np.pi, np.pi, n_bins + 1)
    counts = np.bincount(bin_index(phases, n_bins), minlength=n_bins).astype(float)
    return PhaseDistribution(edges, counts, int(phases.size), complex(np.exp(1j * phases).sum()))


def histogram_peaks(dist, min_weight=0.01):
    """Indices of circular local maxima whose weight is at least ``min_weight``."""
    w = dist.weights
    left, right = np.roll(w, 1), np.roll(w, -1)
    is_peak = (w >= left) & (w > right) & (w >= min_weight)
    return np.nonzero(is_peak)[0]
