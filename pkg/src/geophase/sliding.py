"""Two-level atom moving at constant velocity above a lossy dielectric half-space.

Dimensionless units: frequencies and rates in units of the surface-plasmon
frequency omega_s, times in 1/omega_s, velocity v = v_phys/(omega_s d).
The coupling enters only through mu2_over_d3 = mu²/d³.

The environment kernels zeta_lm(t) are double integrals over t' and the
field frequency. The frequency integral has a closed form (poles of the
Drude-Lorentz response plus an exponential-integral term); the t' integral is
done with adaptive composite Gauss-Legendre panels, which also give cumulative
values at every node so the dynamics and phases can be assembled in one pass.
"""
import json
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from numpy.polynomial import legendre as leg
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import exp1, expi

from .errors import BranchError, DomainError, NoDecay, OrthogonalEndpoints, QuadratureFailure
from .phasefun import wrap_phase

KERNEL_RTOL = 1e-7
ENVELOPE_TOL = 1e-10
_ASYMPTOTIC_RADIUS = 40.0
_GL_ORDER = 20


@dataclass(frozen=True)
class SlidingAtomSpec:
    omega0_tilde: float
    Gamma_tilde: float
    v: float = 0.0
    mu2_over_d3: float = 0.005
    n_hat: tuple = (1.0, 0.0, 0.0)
    vartheta0: float = np.pi / 2

    def __post_init__(self):
        n = np.asarray(self.n_hat, dtype=float)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or norm < 1e-12:
            raise DomainError("n_hat must be a non-zero 3-vector")
        object.__setattr__(self, "n_hat", tuple(float(c) for c in n / norm))
        if self.omega0_tilde <= 0 or self.Gamma_tilde <= 0:
            raise DomainError("omega0_tilde and Gamma_tilde must be positive")
        if self.v < 0:
            raise DomainError("velocity must be non-negative")

    @property
    def v_crit(self):
        return 0.5 * self.omega0_tilde

    @property
    def regime(self):
        return "subcritical" if self.v < self.v_crit else "supercritical"

    @property
    def mu_i(self):
        return 1.0 + self.n_hat[2] ** 2

    @property
    def mu_a(self):
        nx, ny, nz = self.n_hat
        return 3 * nx**2 + ny**2 + 4 * nz**2

    @property
    def natural_period(self):
        return 2 * np.pi / self.omega0_tilde

    @property
    def kernel_scale(self):
        """Prefactor of the t'-integral; fixed so the v = 0 plateau equals the Markov value."""
        return 2 * self.mu2_over_d3 / np.pi**2


# --- material presets --------------------------------------------------------

@dataclass(frozen=True)
class MaterialPreset:
    name: str
    omega_s: float
    Gamma_tilde: float
    atoms: dict = field(default_factory=dict)

    def omega0_tilde(self, atom, index=0):
        return self.atoms[atom][index]


def load_materials():
    """Material presets from the bundled data file, keyed by name."""
    raw = json.loads(resources.files("geophase").joinpath("data/materials.json").read_text())
    return {name: MaterialPreset(name, float(m["omega_s"]), float(m["Gamma_tilde"]),
                                 {a: tuple(float(x) for x in vals) for a, vals in m["atoms"].items()})
            for name, m in raw["materials"].items()}


def spec_from_preset(material, atom, index=0, **kwargs):
    preset = load_materials()[material]
    return SlidingAtomSpec(omega0_tilde=preset.omega0_tilde(atom, index),
                           Gamma_tilde=preset.Gamma_tilde, **kwargs)


# --- spectral function and its derivatives -----------------------------------

def spectral_h(omega0_tilde, Gamma_tilde):
    w, g = np.asarray(omega0_tilde, dtype=float), float(Gamma_tilde)
    return g * w / ((w**2 - 1) ** 2 + g**2 * w**2)


def spectral_h_d2(omega0_tilde, Gamma_tilde):
    """Second derivative of spectral_h with respect to omega0_tilde."""
    x, g = np.asarray(omega0_tilde, dtype=float), float(Gamma_tilde)
    num, dnum = g * x, g
    den = (x**2 - 1) ** 2 + g**2 * x**2
    dden = 4 * x * (x**2 - 1) + 2 * g**2 * x
    d2den = 12 * x**2 - 4 + 2 * g**2
    return -2 * dnum * dden / den**2 - num * d2den / den**2 + 2 * num * dden**2 / den**3


def decoherence_ratio_coefficient(omega0_tilde, Gamma_tilde):
    """c in tau_D/tau_D(v=0) ≈ 1 - c (mu_a/mu_i) v² from the Markov kernels."""
    return 0.375 * spectral_h_d2(omega0_tilde, Gamma_tilde) / spectral_h(omega0_tilde, Gamma_tilde)


def algebraic_p(x, n_hat):
    """Velocity and polarization factor P(x) from the closed-form k and angle integrals."""
    nx, ny, nz = n_hat
    x = np.asarray(x, dtype=float)
    return (4 * (1 + nz**2) + x**2 * (-2 * nx**2 + ny**2 - nz**2)) / (4 + x**2) ** 2.5


# --- frequency integral ------------------------------------------------------

def scaled_exp1(z):
    """exp(z)·E1(z) for complex z off the negative real axis.

    scipy's E1 is used inside |z| < 40; beyond that the asymptotic series is
    summed directly so large negative Re z does not overflow.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    near = np.abs(z) < _ASYMPTOTIC_RADIUS
    out[near] = np.exp(z[near]) * exp1(z[near])
    zf = z[~near]
    term = 1.0 / zf
    total = np.zeros_like(zf)
    for k in range(40):
        total += term
        term = term * (-(k + 1) / zf)
    out[~near] = total
    return out


def _scaled_expi(x):
    """exp(-x)·Ei(x) for real x > 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    near = x < _ASYMPTOTIC_RADIUS
    out[near] = np.exp(-x[near]) * expi(x[near])
    xf = x[~near]
    term = 1.0 / xf
    total = np.zeros_like(xf)
    for k in range(40):
        total += term
        term = term * ((k + 1) / xf)
    out[~near] = total
    return out


def resonance_root(Gamma_tilde):
    """Root of (w² - 1)² + Γ²w² = 0 in the closed upper half plane with Re w ≥ 0."""
    g = float(Gamma_tilde)
    if g < 2:
        return complex(np.sqrt(4 - g**2), g) / 2
    return 1j * (g + np.sqrt(g**2 - 4)) / 2


def omega_integral(m, t, Gamma_tilde):
    """I_m(t) = ∫_0^∞ S(w) cos(w t - m π/2) dw with S(w) = Γw/((w²-1)² + Γ²w²), t > 0."""
    t = np.asarray(t, dtype=float)
    g = float(Gamma_tilde)
    if np.any(t <= 0):
        raise DomainError("omega_integral needs t > 0")
    if abs(g - 2) < 1e-9:
        # critical damping: double pole at w = i
        if m == 1:
            return 0.5 * np.pi * t * np.exp(-t)
        return 1 - 0.5 * t * (scaled_exp1(t + 0j).real + _scaled_expi(t))
    if g < 2:
        r = np.sqrt(4 - g**2)
        wr = resonance_root(g)
        pole = np.exp(1j * wr * t)
        if m == 1:
            return np.pi / r * pole.imag
        tail = scaled_exp1(1j * wr * t) + scaled_exp1(-1j * wr * t)
        return np.pi / r * pole.real + tail.imag / r
    # overdamped: two real decay constants a < b with ab = 1
    root = np.sqrt(g**2 - 4)
    a, b = (g - root) / 2, (g + root) / 2
    pref = g / (b**2 - a**2)
    if m == 1:
        return pref * 0.5 * np.pi * (np.exp(-a * t) - np.exp(-b * t))

    def cos_part(c):
        # ∫_0^∞ w cos(wt)/(w² + c²) dw
        x = c * t
        return -0.5 * (_scaled_expi(x) - scaled_exp1(x + 0j).real)

    return pref * (cos_part(a) - cos_part(b))


# --- kernels -----------------------------------------------------------------

_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _kernel_values(spec, t):
    """t'-integrands (without prefactor) for all four (l, m) at times ``t`` > 0."""
    i0 = omega_integral(0, t, spec.Gamma_tilde)
    i1 = omega_integral(1, t, spec.Gamma_tilde)
    p = algebraic_p(spec.v * t, spec.n_hat)
    c, s = np.cos(spec.omega0_tilde * t), np.sin(spec.omega0_tilde * t)
    lfac = {0: c * p, 1: s * p}
    mfac = {0: i0, 1: i1}
    return {(l, m): lfac[l] * mfac[m] for l, m in _PAIRS}


def kernel_cutoff(spec, tol=ENVELOPE_TOL, t_max=1e7):
    """Time after which the kernel envelope stays below ``tol`` times its peak."""
    t = np.geomspace(1e-3, t_max, 8000)
    env = (np.abs(omega_integral(0, t, spec.Gamma_tilde))
           + np.abs(omega_integral(1, t, spec.Gamma_tilde))) * np.abs(algebraic_p(spec.v * t, spec.n_hat))
    tail_max = np.maximum.accumulate(env[::-1])[::-1]
    above = np.nonzero(tail_max >= tol * env.max())[0]
    if above.size == 0:
        return float(t[0])
    if above[-1] == len(t) - 1:
        warnings.warn("kernel envelope has not decayed by t_max; truncating there")
        return float(t_max)
    return float(t[above[-1] + 1])


def _gl_operators(n=_GL_ORDER):
    x, w = leg.leggauss(n)
    vander = leg.legvander(x, n - 1)
    vinv = np.linalg.inv(vander)
    anti = np.empty((n, n))
    for k in range(n):
        coef = np.zeros(n)
        coef[k] = 1.0
        anti[:, k] = leg.legval(x, leg.legint(coef, lbnd=-1))
    # cumulative[i, j]: weight of node j in ∫_{-1}^{x_i}
    return x, w, anti @ vinv, vinv


_GL_X, _GL_W, _GL_CUM, _GL_VINV = _gl_operators()


class ZetaTable:
    """Cumulative kernels on a panel grid covering [0, t_end].

    Attributes after construction: ``edges`` (panel boundaries, containing
    every requested sample time), ``nodes`` (panel x node), and per (l, m)
    the arrays ``zeta_edge``, ``zeta_node``, ``Z_edge``, ``Z_node`` where Z is
    the running integral of zeta. Beyond ``t_cut`` the kernel is dropped and
    zeta stays at its plateau.
    """

    def __init__(self, spec, t_end, sample_times=(), rtol=KERNEL_RTOL, env_tol=ENVELOPE_TOL,
                 max_rounds=40):
        self.spec = spec
        self.t_cut = kernel_cutoff(spec, env_tol)
        self.t_end = float(max(t_end, 0.0))
        self.rtol = rtol
        kernel_end = min(self.t_cut, self.t_end)
        fast = max(spec.omega0_tilde, abs(resonance_root(spec.Gamma_tilde).real), 1e-3)
        width = 4 * np.pi / fast
        if spec.v > 0:
            width = min(width, 4.0 / spec.v)
        inner = np.linspace(0.0, kernel_end, int(np.ceil(kernel_end / width)) + 1) if kernel_end > 0 else np.array([0.0])
        edges = self._merge(inner, sample_times, kernel_end)
        edges = self._refine(edges, max_rounds)
        if self.t_end > kernel_end:
            outer_width = max(width, 0.05 * self.t_end)
            outer = np.linspace(kernel_end, self.t_end, int(np.ceil((self.t_end - kernel_end) / outer_width)) + 1)
            edges = np.union1d(edges, self._merge(outer, sample_times, self.t_end, lower=kernel_end))
        self.edges = edges
        self._assemble()

    @staticmethod
    def _merge(grid, samples, upper, lower=0.0):
        s = np.asarray(samples, dtype=float).ravel()
        s = s[(s > lower) & (s < upper)]
        return np.union1d(grid, s)

    def _panel_kernel(self, edges):
        h = np.diff(edges)
        nodes = edges[:-1, None] + 0.5 * h[:, None] * (_GL_X + 1)
        vals = _kernel_values(self.spec, nodes)
        return h, nodes, vals

    def _refine(self, edges, max_rounds):
        if len(edges) < 2:
            return edges
        for _ in range(max_rounds):
            h, nodes, vals = self._panel_kernel(edges)
            scale = sum(np.sum(0.5 * h * (np.abs(v) @ _GL_W)) for v in vals.values())
            length = edges[-1] - edges[0]
            bad = np.zeros(len(h), dtype=bool)
            for v in vals.values():
                coef = v @ _GL_VINV.T
                tail = h * (np.abs(coef[:, -1]) + np.abs(coef[:, -2]))
                bad |= tail > self.rtol * scale * h / length + 1e-300
            if not bad.any():
                return edges
            mids = 0.5 * (edges[:-1] + edges[1:])[bad]
            edges = np.union1d(edges, mids)
        worst = 0.5 * (edges[:-1] + edges[1:])[np.argmax(bad)]
        raise QuadratureFailure(f"kernel quadrature did not reach rtol={self.rtol:g}; "
                                f"unresolved panel near t={worst:.6g}")

    def _assemble(self):
        edges = self.edges
        h = np.diff(edges)
        self.nodes = edges[:-1, None] + 0.5 * h[:, None] * (_GL_X + 1)
        in_kernel = edges[1:] <= self.t_cut * (1 + 1e-12)
        vals = {lm: np.zeros_like(self.nodes) for lm in _PAIRS}
        if in_kernel.any():
            kv = _kernel_values(self.spec, self.nodes[in_kernel])
            for lm in _PAIRS:
                vals[lm][in_kernel] = kv[lm]
        c = self.spec.kernel_scale
        self.zeta_edge, self.zeta_node, self.Z_edge, self.Z_node = {}, {}, {}, {}
        for lm in _PAIRS:
            k = vals[lm]
            tot = 0.5 * h * (k @ _GL_W)
            a_edge = np.concatenate([[0.0], np.cumsum(tot)])
            a_node = a_edge[:-1, None] + 0.5 * h[:, None] * (k @ _GL_CUM.T)
            z_node = c * a_node
            ztot = 0.5 * h * (z_node @ _GL_W)
            big_edge = np.concatenate([[0.0], np.cumsum(ztot)])
            self.zeta_edge[lm] = c * a_edge
            self.zeta_node[lm] = z_node
            self.Z_edge[lm] = big_edge
            self.Z_node[lm] = big_edge[:-1, None] + 0.5 * h[:, None] * (z_node @ _GL_CUM.T)

    def plateau(self, lm):
        if self.t_end < self.t_cut:
            raise DomainError("table does not reach the kernel cutoff; build it with t_end >= t_cut")
        return float(self.zeta_edge[lm][-1])

    def at(self, times, lm, which="zeta"):
        """Values at sample times that are panel edges."""
        src = self.zeta_edge[lm] if which == "zeta" else self.Z_edge[lm]
        idx = np.searchsorted(self.edges, times)
        idx = np.clip(idx, 0, len(self.edges) - 1)
        if np.any(np.abs(self.edges[idx] - times) > 1e-9 * max(1.0, self.t_end)):
            raise ValueError("requested time is not on the table grid")
        return src[idx]


def zeta_kernel(spec, l, m, t, rtol=KERNEL_RTOL):
    """zeta_lm at time(s) ``t`` ≥ 0."""
    if (l, m) not in _PAIRS:
        raise ValueError("l and m must be 0 or 1")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("zeta_kernel needs t >= 0")
    flat = t.ravel()
    table = ZetaTable(spec, float(flat.max(initial=0.0)), flat, rtol=rtol)
    return table.at(flat, (l, m)).reshape(t.shape)


def zeta_plateau(spec, rtol=KERNEL_RTOL):
    """Long-time values of the four kernels keyed by (l, m)."""
    table = ZetaTable(spec, kernel_cutoff(spec), rtol=rtol)
    return {lm: table.plateau(lm) for lm in _PAIRS}


def markov_zeta(spec):
    """Markov, low-velocity kernels (zeta00, zeta11); they coincide at this order."""
    if spec.v >= spec.v_crit:
        warnings.warn("low-velocity Markov kernels used at or above the critical velocity")
    h = spectral_h(spec.omega0_tilde, spec.Gamma_tilde)
    h2 = spectral_h_d2(spec.omega0_tilde, spec.Gamma_tilde)
    z = spec.mu2_over_d3 / np.pi * (spec.mu_i / 8 * h + 3 / 64 * spec.mu_a * spec.v**2 * h2)
    return float(z), float(z)


# --- dynamics ----------------------------------------------------------------

def _population_difference(table, cos_vartheta):
    """rho_11 - rho_22 at edges and nodes, propagated panel by panel."""
    z00_e, z00_n = table.Z_edge[(0, 0)], table.Z_node[(0, 0)]
    zeta11 = table.zeta_node[(1, 1)]
    h = np.diff(table.edges)
    local = z00_n - z00_e[:-1, None]
    g = zeta11 * np.exp(4 * local)
    partial = 0.5 * h[:, None] * (g @ _GL_CUM.T)
    full = 0.5 * h * (g @ _GL_W)
    decay = np.exp(-4 * np.diff(z00_e))
    edge_vals = np.empty(len(table.edges))
    edge_vals[0] = cos_vartheta
    for p in range(len(h)):
        edge_vals[p + 1] = decay[p] * (edge_vals[p] - 4 * full[p])
    node_vals = np.exp(-4 * local) * (edge_vals[:-1, None] - 4 * partial)
    return edge_vals, node_vals


def _density(rho_minus, coh):
    out = np.zeros(rho_minus.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 0.5 * (1 + rho_minus)
    out[..., 1, 1] = 0.5 * (1 - rho_minus)
    out[..., 0, 1] = coh
    out[..., 1, 0] = np.conj(coh)
    return out


def _coherence(table, spec, where):
    if where == "edge":
        z00, z01, t = table.Z_edge[(0, 0)], table.Z_edge[(0, 1)], table.edges
    else:
        z00, z01, t = table.Z_node[(0, 0)], table.Z_node[(0, 1)], table.nodes
    amp = 0.5 * np.sin(spec.vartheta0) * np.exp(-2 * z00)
    return amp * np.exp(-2j * z01 - 1j * spec.omega0_tilde * t)


def evolve_sliding(spec, t_samples, rtol=KERNEL_RTOL):
    """Density matrices (shape (N, 2, 2)) at ``t_samples`` from cos(ϑ/2)|+> + sin(ϑ/2)|->.

    Basis order (|+>, |->) with |+> the excited level. The coherence phase uses
    the (l, m) = (0, 1) kernel.
    """
    t = np.asarray(t_samples, dtype=float)
    if np.any(t < 0):
        raise DomainError("sample times must be non-negative")
    table = ZetaTable(spec, float(t.max(initial=0.0)), t, rtol=rtol)
    edge_rm, _ = _population_difference(table, np.cos(spec.vartheta0))
    coh = _coherence(table, spec, "edge")
    rho = _density(edge_rm, coh)
    idx = np.searchsorted(table.edges, t)
    return rho[np.clip(idx, 0, len(table.edges) - 1)]


def steady_excited_population(spec, rtol=KERNEL_RTOL):
    """rho_11 as t -> ∞ from the kernel plateaus."""
    z = zeta_plateau(spec, rtol)
    if z[(0, 0)] <= 0:
        raise NoDecay("zeta00 plateau is not positive; no stationary state")
    return (z[(0, 0)] - z[(1, 1)]) / (2 * z[(0, 0)])


def purity(rho):
    rho = np.asarray(rho)
    return np.real(np.einsum("...ij,...ji->...", rho, rho))


@dataclass(frozen=True)
class DecoherenceTimes:
    numeric: float
    markov: float
    ratio: float


def _time_where_Z_reaches(table, lm, level):
    z_edge = table.Z_edge[lm]
    hit = np.nonzero(z_edge >= level)[0]
    if hit.size:
        p = hit[0] - 1
        a, b = table.edges[p], table.edges[p + 1]
        coef = table.zeta_node[lm][p] @ _GL_VINV.T
        anti = leg.legint(coef, lbnd=-1) * 0.5 * (b - a)
        f = lambda x: z_edge[p] + leg.legval(x, anti) - level
        x = brentq(f, -1.0, 1.0, xtol=1e-14, rtol=1e-12)
        return a + 0.5 * (b - a) * (x + 1)
    if table.t_end < table.t_cut:
        return None
    rate = table.plateau(lm)
    if rate <= 0:
        raise NoDecay("zeta00 never drives the decoherence functional to e^-2")
    return table.edges[-1] + (level - z_edge[-1]) / rate


def _tau_numeric(spec, rtol):
    table = ZetaTable(spec, kernel_cutoff(spec), rtol=rtol)
    tau = _time_where_Z_reaches(table, (0, 0), 1.0)
    if tau is None:
        raise NoDecay("decoherence functional did not reach e^-2")
    return float(tau)


def tau_markov(spec):
    """Low-velocity analytic decoherence time, in units of 1/omega_s."""
    h = spectral_h(spec.omega0_tilde, spec.Gamma_tilde)
    h2 = spectral_h_d2(spec.omega0_tilde, spec.Gamma_tilde)
    corr = 1 - 0.375 * (spec.mu_a / spec.mu_i) * spec.v**2 * h2 / h
    return float(64 / (spec.mu2_over_d3 * spec.mu_i * h) * corr)


def decoherence_time(spec, rtol=KERNEL_RTOL):
    """Numeric tau_D where exp(-2∫zeta00) = e^-2, the Markov estimate, and tau(v)/tau(0)."""
    tau = _tau_numeric(spec, rtol)
    tau0 = tau if spec.v == 0 else _tau_numeric(replace(spec, v=0.0), rtol)
    return DecoherenceTimes(tau, tau_markov(spec), tau / tau0)


# --- geometric phase ---------------------------------------------------------

def unitary_gp_static(omega0_tilde, vartheta0, t):
    """Closed-system phase of cos(ϑ/2)|+> + sin(ϑ/2)|-> under (omega0/2)σz."""
    c2, s2 = np.cos(vartheta0 / 2) ** 2, np.sin(vartheta0 / 2) ** 2
    wt = omega0_tilde * np.asarray(t, dtype=float)
    return wrap_phase(np.angle(c2 * np.exp(-0.5j * wt) + s2 * np.exp(0.5j * wt)) + 0.5 * wt * np.cos(vartheta0))


def _phase_from_table(table, spec):
    rm_e, rm_n = _population_difference(table, np.cos(spec.vartheta0))
    coh_e, coh_n = _coherence(table, spec, "edge"), _coherence(table, spec, "node")

    def parts(rm, coh):
        rho22 = 0.5 * (1 - rm)
        eps = 0.5 * (1 + np.sqrt(rm**2 + 4 * np.abs(coh) ** 2))
        return rho22 - eps, np.abs(coh) ** 2

    shift_n, c2_n = parts(rm_n, coh_n)
    den = shift_n**2 + c2_n
    if np.any(den <= 1e-300):
        raise DomainError("tracked eigenvector undefined (degenerate density matrix)")
    rate = (2 * table.zeta_node[(0, 1)] + spec.omega0_tilde) * c2_n / den
    h = np.diff(table.edges)
    integral = np.sum(0.5 * h * (rate @ _GL_W))
    shift_e, _ = parts(rm_e[-1], coh_e[-1])
    half = spec.vartheta0 / 2
    overlap = np.conj(coh_e[-1]) * np.sin(half) - shift_e * np.cos(half)
    if abs(overlap) < 1e-12:
        raise OrthogonalEndpoints("tracked eigenvector is orthogonal to the initial state")
    return wrap_phase(np.angle(overlap) - integral)


def open_gp_sliding(spec, t, rtol=KERNEL_RTOL):
    """(phi_g, delta_phi, delta_phi at v = 0) after time ``t``.

    phi_g is the phase of the eigenvector of rho(t) continuous with the initial
    state; delta_phi is phi_g minus the closed-system phase at the same time.
    """
    phi_u = unitary_gp_static(spec.omega0_tilde, spec.vartheta0, t)
    phi_g = _phase_from_table(ZetaTable(spec, t, rtol=rtol), spec)
    delta = wrap_phase(phi_g - phi_u)
    if spec.v == 0:
        return phi_g, delta, delta
    static = replace(spec, v=0.0)
    delta0 = wrap_phase(_phase_from_table(ZetaTable(static, t, rtol=rtol), static) - phi_u)
    return phi_g, delta, delta0


# --- friction force ----------------------------------------------------------

def friction_force(lambda2g2, omega, Omega_mat, d, v, rtol=1e-6, branch_tol=1e-9):
    """Zero-temperature friction-force magnitude between a particle and an oscillator sheet.

    On the real k line the radicand R = v²(Ω² - k²) - (ω + Ω)² is negative for
    sub-luminal v, and the branch with a decaying exponential is
    exp(-(2d/v)·sqrt(-R))/(-R). If R can reach zero the branch is ambiguous and
    BranchError is raised.
    """
    s = omega + Omega_mat
    if v <= 0 or d <= 0 or omega <= 0 or Omega_mat <= 0:
        raise DomainError("omega, Omega_mat, d and v must be positive")
    r_max = v**2 * Omega_mat**2 - s**2
    if r_max > -branch_tol * s**2:
        raise BranchError(f"radicand reaches {r_max:.3e} on the k line; decaying branch ambiguous")
    if lambda2g2 == 0:
        return 0.0
    expo = 2 * d / v

    def integrand(k):
        q = s**2 + v**2 * (k**2 - Omega_mat**2)
        return np.exp(-expo * (np.sqrt(q) - np.sqrt(-r_max))) / q

    # the constant exp(-expo·sqrt(-r_max)) is factored out to keep quad well scaled
    k_scale = max(np.sqrt(s / (d * v)), 1 / (2 * d), 1.0)
    split = 40 * k_scale
    core, _ = quad(integrand, 0, split, epsabs=0, epsrel=rtol * 1e-2, limit=400)
    tail, _ = quad(integrand, split, np.inf, epsabs=0, epsrel=rtol * 1e-2, limit=200)
    integral = 2 * (core + tail) / (2 * np.pi) * np.exp(-expo * np.sqrt(-r_max))
    return float(lambda2g2 / 16 * s / (omega * Omega_mat) * integral)
