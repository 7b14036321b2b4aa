"""Driven-dissipative readout dynamics and readout metrics.

The master equation

    d rho/dt = -i[H + H_d(t), rho] + kappa D[a] rho,
    H_d(t) = -i eps(t) cos(omega_d t) (a - a^dagger),

is integrated without a rotating-wave approximation.  The coherent part of
the resonator field is removed exactly by the displacement D(alpha(t)) with

    d alpha/dt = -(i omega_t + kappa/2) alpha + eps(t) cos(omega_d t),

solved in closed form on each constant-amplitude segment.  In the displaced
frame the fluxonium sees the c-number drive 2 g Im(alpha) n_f (charge
coupling) together with the residual term (omega_r - omega_t)(alpha a^dagger
+ h.c.), and only a few resonator levels are needed.  omega_t is the dressed
resonator frequency of the initial branch.  The density matrix is integrated
in the interaction picture of the bare diagonal Hamiltonian.
"""

from __future__ import annotations

import csv
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.special import erfc

from ._kernels import frame_rhs
from .branches import assign_branches, branch_vectors
from .dispersive import _label_dressed
from .errors import ConfigurationError, NumericError
from .hilbert import (
    CouplingKind,
    ResonatorParams,
    build_composite,
    destroy,
    diagonalize_composite,
)
from .units import to_ghz

FRAME_LEVELS = 8
TRACKED_LEVELS = tuple(range(2, 8))


@dataclass(frozen=True)
class DrivePulse:
    """Two-step drive envelope; amplitudes and omega_d in rad/ns, durations in ns."""

    eps1: float
    eps2: float
    omega_d: float
    t1: float = 100.0
    t2: float = 200.0
    ring_down: float = 300.0

    def __post_init__(self):
        if min(self.t1, self.t2, self.ring_down) < 0:
            raise ConfigurationError("pulse durations must be non-negative")
        if not self.omega_d > 0:
            raise ConfigurationError("omega_d must be positive")

    @property
    def duration(self):
        return self.t1 + self.t2 + self.ring_down

    def segments(self):
        """(start, stop, amplitude) for the non-empty constant pieces."""
        edges = [0.0, self.t1, self.t1 + self.t2, self.duration]
        amps = [self.eps1, self.eps2, 0.0]
        return [(edges[k], edges[k + 1], amps[k]) for k in range(3) if edges[k + 1] > edges[k]]

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.t1, self.eps1, np.where(t < self.t1 + self.t2, self.eps2, 0.0))


class CoherentField:
    """Closed-form alpha(t) for a damped resonator of frequency ``omega_t`` driven by ``pulse``."""

    def __init__(self, pulse, omega_t, kappa, alpha0=0.0):
        self.pulse = pulse
        self.lam = 1j * omega_t + 0.5 * kappa
        self._starts = []
        alpha = complex(alpha0)
        for t0, t_end, eps in pulse.segments():
            self._starts.append((t0, t_end, eps, alpha))
            alpha = self._segment(t_end, t0, eps, alpha)

    def _particular(self, t, eps):
        wd = self.pulse.omega_d
        out = 0.0
        for s in (1, -1):
            den = self.lam + 1j * s * wd
            # undamped resonant drive: the particular solution grows secularly
            coef = t if abs(den) < 1e-14 * max(wd, 1.0) else 1.0 / den
            out = out + 0.5 * eps * coef * np.exp(1j * s * wd * t)
        return out

    def _segment(self, t, t0, eps, alpha0):
        decay = np.exp(-self.lam * (t - t0))
        return alpha0 * decay + self._particular(t, eps) - decay * self._particular(t0, eps)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for k, (t0, t_end, eps, a0) in enumerate(self._starts):
            last = k == len(self._starts) - 1
            mask = (t >= t0) & ((t <= t_end) if last else (t < t_end))
            if k == 0:
                mask |= t < t0
            out[mask] = self._segment(t[mask], t0, eps, a0)
        return out if out.ndim else complex(out)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    mean_field: np.ndarray
    mean_photon: np.ndarray
    branch_pops: dict
    leakage: np.ndarray
    per_level_pops: dict
    trace: np.ndarray
    frame_photon: np.ndarray
    warnings: list = field(default_factory=list)
    states: list | None = field(default=None, repr=False)
    omega_d: float = float("nan")
    omega_t: float = float("nan")

    def write_csv(self, path):
        levels = sorted(self.per_level_pops)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ns", "re_a", "im_a", "nphot", "p0", "p1", "leak"]
                       + [f"pop_{k}" for k in levels])
            for n, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(self.mean_field[n].real)),
                            repr(float(self.mean_field[n].imag)), repr(float(self.mean_photon[n])),
                            repr(float(self.branch_pops[0][n])), repr(float(self.branch_pops[1][n])),
                            repr(float(self.leakage[n]))]
                           + [repr(float(self.per_level_pops[k][n])) for k in levels])


def dressed_resonator_frequencies(basis, omega_r, coupling, n_levels=FRAME_LEVELS):
    """Dressed resonator frequencies E(i,1) - E(i,0) for fluxonium states 0 and 1."""
    composite = build_composite(basis, ResonatorParams(omega_r, n_levels=n_levels), coupling)
    spectrum = diagonalize_composite(composite)
    k = _label_dressed(spectrum, composite, [(0, 0), (0, 1), (1, 0), (1, 1)])
    e = spectrum.energies
    return e[k[1]] - e[k[0]], e[k[3]] - e[k[2]]


def default_drive_frequency(basis, omega_r, coupling):
    """Midpoint of the two dressed resonator frequencies."""
    w0, w1 = dressed_resonator_frequencies(basis, omega_r, coupling)
    return 0.5 * (w0 + w1)


class _FrameModel:
    """Right-hand side of the displaced-frame master equation (interaction picture)."""

    def __init__(self, basis, omega_r, coupling, kappa, n_f, n_levels, omega_t, field_fn):
        self.F, self.L = n_f, n_levels
        self.E = basis.energies[:n_f] - basis.energies[0]
        self.op = np.array(basis.coupling_operator(coupling.kind)[:n_f, :n_f])
        self.kind = coupling.kind
        self.g = coupling.strength_g
        self.omega_r = omega_r
        self.kappa = kappa
        self.detune = omega_r - omega_t
        self.field = field_fn
        self.dE = self.E[:, None] - self.E[None, :]
        n = np.arange(n_levels, dtype=float)
        self.sq = np.sqrt(n[1:])  # <n-1|a|n>
        self.num = n
        self.level_phase = (self.E[:, None] + omega_r * n[None, :]).ravel()

    def coefficients(self, t):
        alpha = complex(self.field(t))
        u = np.exp(1j * self.omega_r * t)
        if self.kind is CouplingKind.CAPACITIVE:
            c0 = 2.0 * self.g * alpha.imag
            c_lower, c_raise = -1j * self.g * np.conj(u), 1j * self.g * u
        else:
            c0 = 2.0 * self.g * alpha.real
            c_lower, c_raise = self.g * np.conj(u), self.g * u
        return complex(c0), complex(c_lower), complex(c_raise), complex(self.detune * alpha * u)

    def rhs(self, t, y):
        F, L = self.F, self.L
        r = np.ascontiguousarray(y).reshape(F, L, F, L)
        op_t = np.ascontiguousarray(self.op * np.exp(1j * self.dE * t))
        c0, c_lower, c_raise, beta_u = self.coefficients(t)
        out = np.empty_like(r)
        frame_rhs(r, op_t, c0, c_lower, c_raise, beta_u, float(self.kappa), self.sq, out)
        return out.ravel()

    def to_frame(self, t, y):
        """Displaced-frame (Schroedinger) density matrix from the interaction-picture vector."""
        dim = self.F * self.L
        rho = y.reshape(dim, dim)
        ph = np.exp(-1j * self.level_phase * t)
        return ph[:, None] * rho * ph.conj()[None, :]

    def from_frame(self, t, rho):
        ph = np.exp(-1j * self.level_phase * t)
        return (ph.conj()[:, None] * rho * ph[None, :]).ravel()


def _displacement_rows(alpha, n_big, n_small):
    """Rows 0..n_small-1 of D(-alpha) on an n_big-level resonator."""
    a = destroy(n_big)
    gen = -alpha * a.T + np.conj(alpha) * a
    return sla.expm(gen)[:n_small]


def evolve(
    composite,
    pulse,
    kappa,
    initial=1,
    sample_times=None,
    frame_levels=FRAME_LEVELS,
    omega_t=None,
    rtol=1e-8,
    atol=1e-10,
    tracked_levels=TRACKED_LEVELS,
    branch_set=None,
    keep_states=False,
    trace_tol=1e-6,
):
    """Evolve the dressed state |initial, 0> under the two-step drive.

    ``composite`` (typically 20 x 65 or 20 x 150) defines the branches used for
    the populations p_i(t); the dynamics itself runs on the same fluxonium
    levels with ``frame_levels`` resonator levels in the displaced frame.
    """
    basis = composite.fluxonium
    n_f, n_big = composite.dims
    omega_r = composite.resonator.omega_r
    coupling = composite.coupling
    if kappa < 0:
        raise ConfigurationError("kappa must be non-negative")
    if sample_times is None:
        sample_times = np.arange(0.0, pulse.duration + 0.5, 1.0)
    sample_times = np.asarray(sample_times, dtype=float)
    if np.any(np.diff(sample_times) <= 0) or sample_times[0] < 0:
        raise ConfigurationError("sample_times must be increasing and non-negative")

    frame = build_composite(basis, ResonatorParams(omega_r, n_levels=frame_levels), coupling)
    fspec = diagonalize_composite(frame)
    k = _label_dressed(fspec, frame, [(initial, 0), (initial, 1)])
    if omega_t is None:
        omega_t = fspec.energies[k[1]] - fspec.energies[k[0]]
    psi0 = fspec.vectors[:, k[0]]

    field_fn = CoherentField(pulse, omega_t, kappa)
    model = _FrameModel(basis, omega_r, coupling, kappa, n_f, frame_levels, omega_t, field_fn)
    y = np.outer(psi0, psi0.conj()).astype(complex).ravel()

    if branch_set is None:
        branch_set = assign_branches(composite)
    levels = sorted({0, 1, *tracked_levels} & set(branch_set.branches))
    vecs = {i: branch_vectors(branch_set, i).reshape(n_f, n_big, -1) for i in levels}

    states = []
    t_now = 0.0
    for t0, t_end, _ in pulse.segments():
        if t_end <= t_now:
            continue
        lo = max(t0, t_now)
        inside = sample_times[(sample_times >= lo) & (sample_times <= t_end)]
        t_eval = np.unique(np.concatenate([[lo], inside, [t_end]]))
        sol = solve_ivp(model.rhs, (lo, t_end), y, method="DOP853", t_eval=t_eval,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericError(f"integration failed: {sol.message}")
        for col, t in enumerate(sol.t):
            if np.any(np.isclose(sample_times, t, rtol=0, atol=1e-12)) and (not states or t > states[-1][0]):
                states.append((t, sol.y[:, col]))
        y = sol.y[:, -1]
        t_now = t_end
        if t_now >= sample_times[-1]:
            break

    times = np.array([s[0] for s in states])
    alpha = field_fn(times)
    a_small = destroy(frame_levels)
    big_a = np.kron(np.eye(n_f), a_small)
    n_small = np.kron(np.eye(n_f), np.diag(np.arange(frame_levels, dtype=float)))
    mean_field = np.empty(len(times), dtype=complex)
    mean_photon = np.empty(len(times))
    trace = np.empty(len(times))
    frame_photon = np.empty(len(times))
    pops = {i: np.empty(len(times)) for i in levels}
    kept = []
    edge = np.zeros(frame_levels)
    edge[-1] = 1.0
    edge_proj = np.kron(np.ones(n_f), edge)
    edge_pop = 0.0
    for n, (t, yv) in enumerate(states):
        rho = model.to_frame(t, yv)
        tr = np.trace(rho).real
        trace[n] = tr
        if abs(tr - 1.0) > trace_tol:
            raise NumericError(f"trace drifted to {tr!r} at t={t} ns", residual=abs(tr - 1.0))
        a_frame = np.trace(big_a @ rho)
        n_frame = np.trace(n_small @ rho).real
        mean_field[n] = alpha[n] + a_frame
        mean_photon[n] = abs(alpha[n]) ** 2 + 2.0 * (np.conj(alpha[n]) * a_frame).real + n_frame
        frame_photon[n] = n_frame
        edge_pop = max(edge_pop, float(np.real(edge_proj @ np.diag(rho))))
        d_rows = _displacement_rows(alpha[n], n_big, frame_levels)
        for i in levels:
            u = np.einsum("ab,fbm->fam", d_rows, vecs[i]).reshape(n_f * frame_levels, -1)
            pops[i][n] = np.real(np.vdot(u, rho @ u))
        if keep_states:
            kept.append(rho)

    warn = []
    if edge_pop > 1e-3:
        warn.append(f"displaced-frame truncation: top resonator level holds {edge_pop:.2e}")
    if mean_photon.max(initial=0.0) > n_big - 5 - 3 * np.sqrt(max(mean_photon.max(initial=0.0), 1.0)):
        warn.append("photon population reaches within 5 levels of the branch truncation edge")
    for msg in warn:
        _warnings.warn(msg, RuntimeWarning, stacklevel=2)
    leakage = 1.0 - pops[0] - pops[1]
    return TrajectoryRecord(
        times=times,
        mean_field=mean_field,
        mean_photon=mean_photon,
        branch_pops={0: pops[0], 1: pops[1]},
        leakage=leakage,
        per_level_pops={i: pops[i] for i in levels if i >= 2},
        trace=trace,
        frame_photon=frame_photon,
        warnings=warn,
        states=kept if keep_states else None,
        omega_d=pulse.omega_d,
        omega_t=omega_t,
    )


def leakage_final(record):
    return float(record.leakage[-1])


@dataclass(frozen=True)
class ReadoutMetrics:
    times: np.ndarray
    snr: np.ndarray
    assignment_error: np.ndarray
    eta: float = 0.5
    t1_relax: float = 200e3

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tm_ns", "snr", "assignment_error"])
            for t, s, e in zip(self.times, self.snr, self.assignment_error):
                w.writerow([repr(float(t)), repr(float(s)), repr(float(e))])

    def best(self):
        k = int(np.argmin(self.assignment_error))
        return float(self.times[k]), float(self.assignment_error[k])


def snr_curve(traj_g, traj_e, kappa, eta=0.5):
    """SNR(t_m) = sqrt(2 kappa eta int_0^t_m |<a>_e - <a>_g|^2 dt) by the trapezoid rule."""
    tg, te = np.asarray(traj_g.times), np.asarray(traj_e.times)
    if tg.shape != te.shape or not np.allclose(tg, te, rtol=0, atol=1e-12):
        raise ConfigurationError("trajectories must share the same time grid")
    sep = np.abs(traj_e.mean_field - traj_g.mean_field) ** 2
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (sep[1:] + sep[:-1]) * np.diff(tg))])
    return np.sqrt(2.0 * kappa * eta * integral)


def assignment_error(snr_value, t_m, t1_relax=200e3):
    """eps(t_m) = erfc(SNR / 2 sqrt 2) / 2 + t_m / (2 T_1); times in ns."""
    if not t1_relax > 0:
        raise ConfigurationError("t1_relax must be positive")
    return 0.5 * erfc(np.asarray(snr_value) / (2.0 * np.sqrt(2.0))) + np.asarray(t_m) / (2.0 * t1_relax)


def readout_metrics(traj_g, traj_e, kappa, eta=0.5, t1_relax=200e3):
    snr = snr_curve(traj_g, traj_e, kappa, eta)
    err = assignment_error(snr, traj_g.times, t1_relax)
    return ReadoutMetrics(np.asarray(traj_g.times), snr, err, eta, t1_relax)


def describe(record):
    return (f"omega_d/2pi={to_ghz(record.omega_d):.6f} GHz  final leakage={record.leakage[-1]:.4%}  "
            f"peak photons={record.mean_photon.max():.1f}")
