"""Floquet branch analysis of the semiclassically driven fluxonium and array modes.

The resonator is replaced by a classical drive of amplitude set by the mean
photon number n_bar:

    H(t) = H_static + sqrt(n_bar) cos(omega_d t) D,
    H_static = H_f + sum_mu omega_mu c_mu^dag c_mu - i sum_mu g_fmu n_f (c_mu - c_mu^dag),
    D = -2 g_rf n_f + 2i sum_mu g_rmu (c_mu - c_mu^dag).

The one-period propagator is built with a fourth-order commutator-free Magnus
integrator.  Floquet states (at drive phase zero) are followed in n_bar by
maximal overlap, mirroring the quantum branch analysis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .branches import CriticalPhotonResult, _best_match
from .errors import ConfigurationError, NumericError
from .hilbert import destroy

STEPS_PER_PERIOD = 512
UNITARITY_TOL = 1e-10
UNITARITY_FAIL = 1e-8
TRACKING_LOSS = 0.3
DEFAULT_MODE_LEVELS = 5

_SQ3 = np.sqrt(3.0)
_CF4_NODES = (0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0)
_CF4_A = ((3.0 - 2.0 * _SQ3) / 12.0, (3.0 + 2.0 * _SQ3) / 12.0)


@dataclass
class SemiclassicalSystem:
    """Static and drive parts of the fluxonium + array-mode Hamiltonian.

    ``drive_part`` is the coefficient of sqrt(n_bar) cos(omega_d t).
    Basis ordering: fluxonium level outermost, then mode 1, mode 2, ...
    """

    static_part: np.ndarray
    drive_part: np.ndarray
    omega_d: float
    dims: tuple
    fluxonium: object = field(default=None, repr=False)
    array: object = field(default=None, repr=False)

    @property
    def dim(self):
        return self.static_part.shape[0]

    def hamiltonian(self, n_bar, t):
        return self.static_part + np.sqrt(n_bar) * np.cos(self.omega_d * t) * self.drive_part

    def number_operators(self):
        """Diagonals of N_f and of each mode number operator in the product basis."""
        grids = np.meshgrid(*[np.arange(d) for d in self.dims], indexing="ij")
        return [g.ravel().astype(float) for g in grids]


def _embed(ops, dims):
    out = np.ones((1, 1))
    for op, d in zip(ops, dims):
        out = np.kron(out, np.eye(d) if op is None else op)
    return out


def build_semiclassical(fluxonium, omega_d, g_rf, array=None, n_f=None, mode_levels=DEFAULT_MODE_LEVELS,
                        n_modes=None):
    """Assemble a SemiclassicalSystem.

    ``array`` is an ArrayModel or None (fluxonium only).  ``n_modes`` restricts
    to the first modes kept in the model (default: all kept).
    """
    if omega_d <= 0:
        raise ConfigurationError("drive frequency must be positive")
    n_f = fluxonium.n_keep if n_f is None else n_f
    e = fluxonium.energies[:n_f] - fluxonium.energies[0]
    nq = np.asarray(fluxonium.charge_elements[:n_f, :n_f])
    n_modes = 0 if array is None else (array.n_modes if n_modes is None else n_modes)
    dims = (n_f,) + (mode_levels,) * n_modes
    c = destroy(mode_levels)

    def on_mode(mu, op):
        ops = [None] * len(dims)
        ops[1 + mu] = op
        return _embed(ops, dims)

    nf_full = _embed([nq] + [None] * n_modes, dims)
    static = _embed([np.diag(e)] + [None] * n_modes, dims).astype(complex)
    drive = -2.0 * g_rf * nf_full
    for mu in range(n_modes):
        quad = -1j * (c - c.T)  # Hermitian
        static = static + array.mode_freqs[mu] * on_mode(mu, c.T @ c)
        static = static + array.g_fmu[mu] * (nf_full @ on_mode(mu, quad))
        drive = drive - 2.0 * array.g_rmu[mu] * on_mode(mu, quad)
    static = 0.5 * (static + static.conj().T)
    drive = 0.5 * (drive + drive.conj().T)
    return SemiclassicalSystem(static, drive, float(omega_d), dims, fluxonium, array)


def _expm_herm(h, tau):
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


def period_propagator(system, n_bar, steps=STEPS_PER_PERIOD):
    """U(T) from t = 0 with the fourth-order commutator-free Magnus scheme."""
    period = 2.0 * np.pi / system.omega_d
    h = period / steps
    amp = np.sqrt(n_bar)
    h0, d = system.static_part, system.drive_part
    (c1, c2), (a1, a2) = _CF4_NODES, _CF4_A
    u = np.eye(system.dim, dtype=complex)
    if amp == 0.0:
        return _expm_herm(h0, period)
    for k in range(steps):
        t = k * h
        f1 = amp * np.cos(system.omega_d * (t + c1 * h))
        f2 = amp * np.cos(system.omega_d * (t + c2 * h))
        # a1 + a2 = 1/2, so each factor is a half step of H0 plus a weighted drive
        first = _expm_herm(h0 + 2.0 * (a2 * f1 + a1 * f2) * d, 0.5 * h)
        second = _expm_herm(h0 + 2.0 * (a1 * f1 + a2 * f2) * d, 0.5 * h)
        u = second @ (first @ u)
    return u


def unitarity_defect(u):
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), ord=2))


def fold(quasi, omega_d):
    """Fold into (-omega_d/2, omega_d/2]."""
    q = -((-np.asarray(quasi) + 0.5 * omega_d) % omega_d - 0.5 * omega_d)
    return q


def floquet_modes(system, n_bar, steps=STEPS_PER_PERIOD):
    """(quasi-energies, Floquet states at t = 0 as columns, unitarity defect)."""
    if n_bar < 0:
        raise ConfigurationError("n_bar must be non-negative")
    while True:
        u = period_propagator(system, n_bar, steps)
        defect = unitarity_defect(u)
        if defect < UNITARITY_TOL or steps >= 8 * STEPS_PER_PERIOD:
            break
        steps *= 2
    if defect > UNITARITY_FAIL:
        raise NumericError(f"Floquet propagator not unitary (defect {defect:.2e})", residual=defect)
    # U is normal: Schur form is diagonal, giving orthonormal eigenvectors even for near-degenerate phases
    from scipy.linalg import schur

    tmat, z = schur(u, output="complex")
    lam = np.diag(tmat)
    period = 2.0 * np.pi / system.omega_d
    quasi = fold(-np.angle(lam) / period, system.omega_d)
    return quasi, z, defect


@dataclass(frozen=True)
class FloquetPoint:
    n_bar: float
    quasi_energy: float
    mean_qubit: float
    mode_pops: tuple
    overlap: float


@dataclass
class FloquetBranchSet:
    branches: dict
    step_size: float
    n_bar_max: float
    lost: dict
    labels: list = field(default_factory=list, repr=False)

    def trajectory(self, label):
        pts = self.branches[label]
        return (
            np.array([p.n_bar for p in pts]),
            np.array([p.mean_qubit for p in pts]),
            np.array([p.mode_pops for p in pts]).reshape(len(pts), -1),
        )

    def write_csv(self, path, labels=None):
        labels = sorted(self.branches) if labels is None else labels
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "n_bar", "quasi_energy_GHz", "mean_qubit", "mode_pops", "overlap"])
            for lab in labels:
                for p in self.branches[lab]:
                    w.writerow(["-".join(map(str, lab)), p.n_bar, repr(p.quasi_energy / (2 * np.pi)),
                                repr(p.mean_qubit), ";".join(repr(x) for x in p.mode_pops),
                                repr(p.overlap)])


def static_labels(system):
    """Static eigenvectors labelled by their dominant bare product state."""
    w, v = np.linalg.eigh(system.static_part)
    bare = np.argmax(np.abs(v), axis=0)
    if len(set(bare.tolist())) != len(bare):
        # fall back to a one-to-one assignment on |overlap|^2
        from scipy.optimize import linear_sum_assignment

        rows, cols = linear_sum_assignment(-np.abs(v) ** 2)
        bare = np.empty(len(w), dtype=int)
        bare[cols] = rows
    labels = [tuple(int(x) for x in np.unravel_index(b, system.dims)) for b in bare]
    return w, v, labels


def _observables(system, vecs):
    prob = np.abs(vecs) ** 2
    numbers = system.number_operators()
    mean_q = numbers[0] @ prob
    modes = np.array([n @ prob for n in numbers[1:]]).reshape(len(numbers) - 1, prob.shape[1])
    return mean_q, modes


def track_floquet_branches(system, n_bar_max, step=0.5, labels=None, stop_when_crossed=None,
                           steps_per_period=STEPS_PER_PERIOD):
    """Follow Floquet branches from the static eigenstates up to ``n_bar_max``.

    ``labels`` selects the branches to record (default: every state).  All
    states take part in the global matching so that claims stay exclusive.
    ``stop_when_crossed``, a callable on the branch set, allows early exit.
    """
    if step <= 0 or n_bar_max < 0:
        raise ConfigurationError("step must be positive and n_bar_max non-negative")
    energies, prev, all_labels = static_labels(system)
    order = {lab: k for k, lab in enumerate(all_labels)}
    record = set(all_labels) if labels is None else set(map(tuple, labels))
    missing = record - set(all_labels)
    if missing:
        raise ConfigurationError(f"labels not present in the static spectrum: {sorted(missing)}")

    mean_q, modes = _observables(system, prev)
    branches = {lab: [] for lab in record}
    lost = {lab: None for lab in record}
    quasi0 = fold(energies, system.omega_d)
    for lab in record:
        k = order[lab]
        branches[lab].append(FloquetPoint(0.0, float(quasi0[k]), float(mean_q[k]), tuple(modes[:, k]), 1.0))

    n_steps = int(round(n_bar_max / step))
    depth = min(system.dim - 1, 4)
    for s in range(1, n_steps + 1):
        n_bar = s * step
        quasi, vecs, _ = floquet_modes(system, n_bar, steps_per_period)
        ov = np.abs(vecs.conj().T @ prev)  # ov[new, branch]
        candidates = []
        for b in range(system.dim):
            top = np.argpartition(-ov[:, b], depth)[: depth + 1]
            candidates.extend((float(ov[z, b]), int(z), b) for z in top)
        picks = _best_match(candidates)
        # anything left unmatched by the greedy pass takes the best remaining state
        free = sorted(set(range(system.dim)) - set(picks.values()))
        for b in range(system.dim):
            if b not in picks:
                z = max(free, key=lambda z: ov[z, b])
                picks[b] = z
                free.remove(z)
        perm = np.array([picks[b] for b in range(system.dim)])
        new = vecs[:, perm]
        # remove the arbitrary phase so overlaps stay well defined
        phase = np.exp(-1j * np.angle(np.sum(prev.conj() * new, axis=0)))
        new = new * phase
        mean_q, modes = _observables(system, new)
        for lab in record:
            b = order[lab]
            o = float(ov[perm[b], b])
            if o < TRACKING_LOSS and lost[lab] is None:
                lost[lab] = n_bar
            branches[lab].append(
                FloquetPoint(n_bar, float(quasi[perm[b]]), float(mean_q[b]), tuple(modes[:, b]), o)
            )
        prev = new
        bs = FloquetBranchSet(branches, step, n_bar, lost, all_labels)
        if stop_when_crossed is not None and stop_when_crossed(bs):
            return bs
    return FloquetBranchSet(branches, step, float(n_steps * step), lost, all_labels)


def _crossing(points, qubit_threshold, array_threshold):
    for p in points:
        if p.mean_qubit >= qubit_threshold or any(x >= array_threshold for x in p.mode_pops):
            return p.n_bar
    return None


def floquet_critical_photon(branch_set, thresholds=(2.0, 3.0, 0.3)):
    """Critical n_bar from the computational Floquet branches (0,0,..) and (1,0,..)."""
    q0, q1, arr = thresholds
    keys = sorted(branch_set.branches)
    ground = next((k for k in keys if k[0] == 0 and not any(k[1:])), None)
    excited = next((k for k in keys if k[0] == 1 and not any(k[1:])), None)
    if ground is None or excited is None:
        raise ConfigurationError("computational branches were not tracked")
    values, sat = [], []
    for lab, thr in ((ground, q0), (excited, q1)):
        hit = _crossing(branch_set.branches[lab], thr, arr)
        sat.append(hit is None)
        values.append(float(branch_set.n_bar_max) if hit is None else float(hit))
    k = int(np.argmin(values))
    saturated = sat[k] if values[0] != values[1] else all(sat)
    return CriticalPhotonResult(
        n_crit=values[k],
        n_crit_ground=values[0],
        n_crit_excited=values[1],
        saturated=bool(saturated),
        branch_length=min(len(branch_set.branches[ground]), len(branch_set.branches[excited])),
        saturated_ground=sat[0],
        saturated_excited=sat[1],
    )


def computational_labels(system):
    zeros = (0,) * (len(system.dims) - 1)
    return [(0,) + zeros, (1,) + zeros]


def both_crossed(thresholds=(2.0, 3.0, 0.3)):
    """Early-exit predicate for ``track_floquet_branches``."""
    def check(bs):
        try:
            r = floquet_critical_photon(bs, thresholds)
        except ConfigurationError:
            return False
        return not (r.saturated_ground or r.saturated_excited)
    return check


def critical_photon_scan(system, n_bar_max=100.0, step=0.5, thresholds=(2.0, 3.0, 0.3),
                         steps_per_period=STEPS_PER_PERIOD):
    """Track only until both computational branches cross, then extract n_crit."""
    bs = track_floquet_branches(system, n_bar_max, step, labels=computational_labels(system),
                                stop_when_crossed=both_crossed(thresholds),
                                steps_per_period=steps_per_period)
    result = floquet_critical_photon(bs, thresholds)
    return bs, result


# -- array-mode scans over (omega_d, C_gj) --------------------------------------

ARRAY_RECORD_HEADER = [
    "omega_r_GHz", "c_gj_fF", "g_GHz", "chi_MHz", "c_p_fF", "c_c_fF", "mode1_GHz", "mode2_GHz",
    "ncrit", "ncrit_g", "ncrit_e", "saturated", "error",
]


@dataclass(frozen=True)
class ArrayScanGrid:
    """Drive frequencies (rad/ns) x array ground capacitances (fF).

    ``omega_d`` plays the role of the resonator frequency: the fluxonium
    coupling is calibrated to ``chi_target`` at omega_r = omega_d.
    """

    omega_d: tuple
    c_gj: tuple
    ej_over_ec: float = 4.0
    el_over_ec: float = 0.75
    e_c: float = 2.0 * np.pi
    chi_target: float = 2.0 * np.pi * 2.5e-3
    n_f: int = 20
    n_modes: int = 2
    mode_levels: int = DEFAULT_MODE_LEVELS
    n_bar_max: float = 100.0
    step: float = 0.5
    steps_per_period: int = STEPS_PER_PERIOD

    def __post_init__(self):
        object.__setattr__(self, "omega_d", tuple(float(x) for x in np.atleast_1d(self.omega_d)))
        object.__setattr__(self, "c_gj", tuple(float(x) for x in np.atleast_1d(self.c_gj)))
        if not self.omega_d or not self.c_gj:
            raise ConfigurationError("array scan axes need at least one point")

    @property
    def shape(self):
        return len(self.omega_d), len(self.c_gj)

    @property
    def size(self):
        return len(self.omega_d) * len(self.c_gj)


def analyse_array_point(grid, basis, omega_d, c_gj, g_cache=None):
    """Calibrated coupling, solved capacitances and Floquet n_crit for one point."""
    from .circuit import CircuitParams, derive_array_model, solve_capacitances
    from .dispersive import calibrate_coupling

    row = {"omega_r_GHz": omega_d / (2 * np.pi), "c_gj_fF": c_gj}
    try:
        if g_cache is not None and omega_d in g_cache:
            cal = g_cache[omega_d]
        else:
            cal = calibrate_coupling(basis, omega_d, grid.chi_target)
            if g_cache is not None:
                g_cache[omega_d] = cal
        if cal.failed or not cal.within_tolerance:
            raise NumericError("calibration did not reach the dispersive-shift target")
        params = solve_capacitances(CircuitParams(c_gj=c_gj, omega_r=omega_d), cal.g_star,
                                    e_cf_target=grid.e_c)
        model = derive_array_model(params, n_modes_kept=max(grid.n_modes, 1))
        system = build_semiclassical(basis, omega_d, abs(model.g_rf), model if grid.n_modes else None,
                                     n_f=grid.n_f, mode_levels=grid.mode_levels, n_modes=grid.n_modes)
        _, res = critical_photon_scan(system, grid.n_bar_max, grid.step,
                                      steps_per_period=grid.steps_per_period)
    except Exception as exc:  # recorded per point, the scan carries on
        row.update(error=type(exc).__name__)
        return row
    freqs = list(model.mode_freqs / (2 * np.pi)) + [None, None]
    row.update(
        g_GHz=cal.g_star / (2 * np.pi), chi_MHz=cal.chi_achieved / (2 * np.pi) * 1e3,
        c_p_fF=params.c_p, c_c_fF=params.c_c, mode1_GHz=freqs[0], mode2_GHz=freqs[1],
        ncrit=res.n_crit, ncrit_g=res.n_crit_ground, ncrit_e=res.n_crit_excited,
        saturated=str(res.saturated).lower(), error="",
    )
    return row


def _format_row(row):
    out = []
    for key in ARRAY_RECORD_HEADER:
        v = row.get(key)
        if v is None:
            out.append("")
        elif isinstance(v, float):
            out.append(format(v, ".12g"))
        else:
            out.append(str(v))
    return out


def run_array_scan(grid, records_path=None, resume=True, basis=None):
    """Evaluate every (omega_d, C_gj) point, appending rows to ``records_path``.

    On resume, rows already present are kept and their points skipped.  The
    finished file is rewritten in grid order.
    """
    from pathlib import Path

    from .hilbert import FluxoniumParams, diagonalize_fluxonium

    if basis is None:
        basis = diagonalize_fluxonium(
            FluxoniumParams.from_ratios(grid.ej_over_ec, grid.el_over_ec, grid.e_c), 1000, max(grid.n_f, 20)
        )
    done = {}
    if records_path is not None:
        records_path = Path(records_path)
        if resume and records_path.exists():
            with open(records_path, newline="") as fh:
                for r in csv.DictReader(fh):
                    key = (format(float(r["omega_r_GHz"]), ".9g"), format(float(r["c_gj_fF"]), ".9g"))
                    done[key] = [r[k] for k in ARRAY_RECORD_HEADER]
        else:
            with open(records_path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(ARRAY_RECORD_HEADER)
    rows = []
    g_cache = {}
    for w in grid.omega_d:
        for c in grid.c_gj:
            key = (format(w / (2 * np.pi), ".9g"), format(c, ".9g"))
            if key in done:
                rows.append(done[key])
                continue
            row = _format_row(analyse_array_point(grid, basis, w, c, g_cache))
            rows.append(row)
            if records_path is not None:
                with open(records_path, "a", newline="") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(row)
    if records_path is not None:
        with open(records_path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(ARRAY_RECORD_HEADER)
            wr.writerows(rows)
    return [dict(zip(ARRAY_RECORD_HEADER, r)) for r in rows]
