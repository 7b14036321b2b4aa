"""Dispersive shifts, coupling calibration and the dispersive-validity filter.

Sign convention: chi = ([E(1,1) - E(1,0)] - [E(0,1) - E(0,0)]) / 2 for the
dressed energies, which coincides with the perturbative sum
sum_j chi_0j - sum_j chi_1j.  Calibration matches the magnitude |chi| to the
target by default, since the sign of chi flips with the position of omega_r
relative to the qubit transitions while the quoted targets are magnitudes.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DegeneratePointError, FluxmistError, LabelingError
from .hilbert import (
    CouplingKind,
    CouplingSpec,
    ResonatorParams,
    build_composite,
    diagonalize_composite,
)
from .units import mhz, to_ghz

RESONANCE_GUARD = 2.0 * np.pi * 1e-6  # 1 kHz in rad/ns
CHI_TOLERANCE = mhz(0.1)
VALIDITY_THRESHOLD = 0.15
ELEMENT_FLOOR = 1e-8
CALIBRATION_LEVELS = 8


@dataclass(frozen=True)
class DispersiveReport:
    """Perturbative dispersive shift with its signed per-pair contributions.

    ``chi_contributions[(0, j)] = +chi_0j`` and ``chi_contributions[(1, j)] = -chi_1j``
    so that ``chi_total`` is their plain sum.
    """

    chi_total: float
    chi_contributions: dict
    chi_numeric: float | None
    g_used: float
    valid: bool
    worst_ratio: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level_pair", "chi_contribution_GHz"])
            for (i, j), value in sorted(self.chi_contributions.items()):
                w.writerow([f"{i}-{j}", repr(to_ghz(value))])


@dataclass(frozen=True)
class CalibrationResult:
    g_star: float
    chi_achieved: float
    within_tolerance: bool
    grid_used: list = field(repr=False)
    failed: bool = False
    g_interpolated: float = float("nan")


def _couplings(basis, g, kind):
    return g * np.abs(basis.coupling_operator(kind))


def chi_perturbative(basis, g, omega_r, kind=CouplingKind.CAPACITIVE, threshold=VALIDITY_THRESHOLD):
    gij = _couplings(basis, g, kind)
    contributions = {}
    total = 0.0
    for i, sign in ((0, 1.0), (1, -1.0)):
        for j in range(basis.n_keep):
            if j == i:
                continue
            w = basis.transition(i, j)
            if abs(abs(w) - omega_r) < RESONANCE_GUARD and gij[i, j] > ELEMENT_FLOOR * max(g, 1e-300):
                raise DegeneratePointError(
                    f"transition {i}->{j} at {to_ghz(abs(w)):.9f} GHz is resonant with the resonator"
                )
            term = gij[i, j] ** 2 * w / (w**2 - omega_r**2)
            contributions[(i, j)] = sign * term
            total += sign * term
    valid, worst = dispersive_validity(basis, g, omega_r, threshold=threshold, kind=kind)
    return DispersiveReport(total, contributions, None, g, valid, worst)


def _label_dressed(spectrum, composite, bare, tol=1e-6):
    """Eigen-indices of the dressed states with maximal overlap with each bare state."""
    picks = []
    for i_f, n_r in bare:
        overlap = np.abs(spectrum.vectors[composite.index(i_f, n_r)])
        order = np.argsort(-overlap, kind="stable")
        if overlap[order[0]] - overlap[order[1]] < tol:
            raise LabelingError(
                f"bare state |{i_f},{n_r}> overlaps eigenstates {order[0]} and {order[1]} equally"
            )
        picks.append(int(order[0]))
    if len(set(picks)) != len(picks):
        raise LabelingError(f"bare states {bare} do not map to distinct eigenstates")
    return picks


def chi_numeric(composite):
    if composite.coupling.strength_g == 0.0:
        return 0.0
    spectrum = diagonalize_composite(composite)
    k00, k01, k10, k11 = _label_dressed(spectrum, composite, [(0, 0), (0, 1), (1, 0), (1, 1)])
    e = spectrum.energies
    return 0.5 * ((e[k11] - e[k10]) - (e[k01] - e[k00]))


def chi_numeric_at(basis, omega_r, g, kind=CouplingKind.CAPACITIVE, n_levels=CALIBRATION_LEVELS):
    """chi_numeric on a small composite; resonator truncation barely affects chi."""
    res = ResonatorParams(omega_r=omega_r, n_levels=n_levels)
    return chi_numeric(build_composite(basis, res, CouplingSpec(g, kind)))


def default_g_grid(n_points=100, g_min=mhz(5.0), g_max=mhz(500.0)):
    return np.linspace(g_min, g_max, n_points)


def _sample_chi(basis, omega_r, grid, kind, n_levels, workers, target=None, shape=None):
    """chi on the grid; with ``target`` set, stop two points past the first bracket."""
    def one(g):
        try:
            return chi_numeric_at(basis, omega_r, g, kind, n_levels)
        except FluxmistError:
            return np.nan

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, grid)))
    if target is None:
        return np.array([one(g) for g in grid])
    out = np.full(len(grid), np.nan)
    stop = len(grid)
    for k, g in enumerate(grid):
        if k >= stop:
            break
        out[k] = one(g)
        if stop == len(grid) and k > 0 and np.isfinite(out[k - 1] + out[k]):
            if (shape(out[k - 1]) - target) * (shape(out[k]) - target) <= 0.0:
                stop = min(k + 3, len(grid))
    return out[:stop]


def calibrate_coupling(
    basis,
    omega_r,
    chi_target,
    g_grid=None,
    kind=CouplingKind.CAPACITIVE,
    n_levels=CALIBRATION_LEVELS,
    tolerance=CHI_TOLERANCE,
    signed=False,
    workers=None,
    lazy=True,
):
    """Coupling strength g* whose numerical dispersive shift equals ``chi_target``.

    chi(g) is sampled on the grid, interpolated with a shape-preserving cubic,
    inverted for the smallest bracketed root and polished by one Newton step
    (limited to one grid spacing) using a fresh evaluation.  With ``lazy`` the
    sampling stops shortly after the first bracket, which cannot change the
    smallest root.
    """
    grid = default_g_grid() if g_grid is None else np.asarray(g_grid, dtype=float)
    shape = (lambda x: x) if signed else np.abs
    target = chi_target if signed else abs(chi_target)
    if lazy and not (workers and workers > 1):
        chi = _sample_chi(basis, omega_r, grid, kind, n_levels, None, target, shape)
    else:
        chi = _sample_chi(basis, omega_r, grid, kind, n_levels, workers)
    spacing = grid[1] - grid[0] if len(grid) > 1 else grid[0]
    grid = grid[: len(chi)]
    y = shape(chi) - target
    samples = list(zip(grid.tolist(), chi.tolist()))

    def failure():
        return CalibrationResult(np.nan, np.nan, False, samples, failed=True)

    finite = np.isfinite(y)
    root = None
    for k in range(len(grid) - 1):
        if not (finite[k] and finite[k + 1]):
            continue
        if y[k] == 0.0:
            root = (grid[k], k)
            break
        if y[k] * y[k + 1] < 0.0:
            root = (None, k)
            break
    if root is None:
        return failure()

    g_raw, k = root
    lo = max(k - 1, 0)
    while lo > 0 and finite[lo - 1] and lo > k - 3:
        lo -= 1
    hi = min(k + 3, len(grid))
    while hi > k + 2 and not finite[hi - 1]:
        hi -= 1
    idx = np.arange(lo, hi)
    idx = idx[finite[idx]]
    interp = PchipInterpolator(grid[idx], y[idx])
    if g_raw is None:
        g_raw = brentq(interp, grid[k], grid[k + 1], xtol=1e-14)

    def measure(g):
        try:
            value = chi_numeric_at(basis, omega_r, g, kind, n_levels)
        except FluxmistError:
            return np.nan, np.nan
        return value, shape(value) - target

    chi_raw, err_raw = measure(g_raw)
    g_star, chi_star, err_star = g_raw, chi_raw, err_raw
    slope = float(interp.derivative()(g_raw))
    if np.isfinite(err_raw) and slope != 0.0:
        step = float(np.clip(-err_raw / slope, -spacing, spacing))
        chi_new, err_new = measure(g_raw + step)
        if np.isfinite(err_new) and abs(err_new) <= abs(err_raw):
            g_star, chi_star, err_star = g_raw + step, chi_new, err_new
    if not np.isfinite(err_star):
        return failure()
    ok = abs(err_star) <= tolerance
    return CalibrationResult(float(g_star), float(chi_star), bool(ok), samples, False, float(g_raw))


def dispersive_validity(basis, g, omega_r, threshold=VALIDITY_THRESHOLD, n_r=0, kind=CouplingKind.CAPACITIVE):
    """(valid, worst_ratio) for g_ij sqrt(n_r+1) / |omega_ij - omega_r| with i in {0,1}, j >= 2."""
    if g == 0.0:
        return True, 0.0
    gij = _couplings(basis, g, kind)
    worst = 0.0
    for i in (0, 1):
        for j in range(2, basis.n_keep):
            detuning = abs(basis.transition(i, j) - omega_r)
            num = gij[i, j] * np.sqrt(n_r + 1.0)
            ratio = np.inf if detuning == 0.0 and num > 0 else (num / detuning if num > 0 else 0.0)
            worst = max(worst, ratio)
    return bool(worst < threshold), float(worst)
