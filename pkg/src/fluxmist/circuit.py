"""Junction-array fluxonium: closed-form charging energies, array modes and couplings.

Circuit: a phase-slip junction (C_p) closes a chain of N identical array
junctions (E_Jj, C_j).  Interior array nodes see C_gj to ground, the two
phase-slip nodes see C_gp, and node 0 couples to the resonator through C_c.
After removing the cyclic node coordinate, the drops theta_m are rotated to
the qubit mode phi_f = sum(theta) and the standing-wave array modes
xi_mu = sum_m W_{mu m} theta_m.  Charging energies come from the diagonal of
the capacitance matrix C', couplings from its first-order inverse.

Capacitances are in fF at the interface, energies in rad/ns.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InfeasibleError, ParameterDomainError, ValidityError
from .units import (
    FLUX_QUANTUM_REDUCED,
    PLANCK,
    TWO_PI,
    capacitance_ff_from_charging,
    charging_energy_from_ff,
    ghz,
    to_ghz,
)

HBAR = PLANCK / TWO_PI
LINEARITY_RATIO = 20.0
SOLVE_TOL = TWO_PI * 1e-6  # 1 kHz in rad/ns


@dataclass(frozen=True)
class CircuitParams:
    c_gj: float
    c_p: float = 14.0
    c_c: float = 8.0
    e_jj: float = ghz(90.0)
    n_junctions: int = 120
    c_j: float = 25.0
    c_gp: float = 10.0
    z_r: float = 50.0
    omega_r: float = ghz(7.0)

    def __post_init__(self):
        for name in ("c_gj", "c_p", "c_c", "c_j", "c_gp"):
            if not getattr(self, name) > 0.0:
                raise ParameterDomainError(f"{name} must be positive (fF)")
        if self.n_junctions < 3:
            raise ParameterDomainError("need at least three array junctions")
        if not (self.e_jj > 0 and self.z_r > 0 and self.omega_r > 0):
            raise ParameterDomainError("e_jj, z_r and omega_r must be positive")


@dataclass(frozen=True)
class ArrayModel:
    e_cf: float
    e_cr: float
    e_lr: float
    e_t: float
    mode_freqs: np.ndarray
    mode_charging: np.ndarray
    j_rf: float
    j_rmu: np.ndarray
    j_fmu: np.ndarray
    j_munu: np.ndarray
    g_rf: float
    g_rmu: np.ndarray
    g_fmu: np.ndarray
    zpf_r: float
    zpf_mu: np.ndarray
    w_matrix: np.ndarray = field(repr=False)
    params: CircuitParams = None

    @property
    def n_modes(self):
        return len(self.mode_freqs)

    def to_dict(self):
        """Audit view: energies and couplings in GHz, capacitances in fF."""
        p = asdict(self.params)
        p["e_jj"] = to_ghz(p["e_jj"])
        p["omega_r"] = to_ghz(p["omega_r"])
        gh = lambda x: np.atleast_1d(to_ghz(np.asarray(x))).tolist()
        return {
            "params": {k + ("_GHz" if k in ("e_jj", "omega_r") else ""): v for k, v in p.items()},
            "e_cf_GHz": to_ghz(self.e_cf),
            "e_cr_GHz": to_ghz(self.e_cr),
            "e_lr_GHz": to_ghz(self.e_lr),
            "e_t_GHz": to_ghz(self.e_t),
            "mode_freqs_GHz": gh(self.mode_freqs),
            "mode_charging_GHz": gh(self.mode_charging),
            "j_rf_GHz": to_ghz(self.j_rf),
            "j_rmu_GHz": gh(self.j_rmu),
            "j_fmu_GHz": gh(self.j_fmu),
            "j_munu_GHz": to_ghz(np.asarray(self.j_munu)).tolist(),
            "g_rf_GHz": to_ghz(self.g_rf),
            "g_rmu_GHz": gh(self.g_rmu),
            "g_fmu_GHz": gh(self.g_fmu),
            "zpf_r": self.zpf_r,
            "zpf_mu": np.asarray(self.zpf_mu).tolist(),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def standing_waves(n):
    """W_{mu m} = sqrt(2/N) cos(pi mu (m - 1/2) / N), mu = 1..N-1, m = 1..N."""
    mu = np.arange(1, n)[:, None]
    m = np.arange(1, n + 1)[None, :]
    return np.sqrt(2.0 / n) * np.cos(np.pi * mu * (m - 0.5) / n)


def resonator_energies(omega_r, z_r):
    """(E_Cr, E_Lr) of an LC resonator with frequency omega_r (rad/ns) and impedance z_r (ohm)."""
    c_farad = 1.0 / (omega_r * 1e9 * z_r)
    l_henry = z_r / (omega_r * 1e9)
    e_c = charging_energy_from_ff(c_farad * 1e15)
    e_l = FLUX_QUANTUM_REDUCED**2 / l_henry / HBAR * 1e-9
    return e_c, e_l


def _mode_factors(n, mu):
    o = (1 - (-1.0) ** mu) / 2.0
    o_next = (1 - (-1.0) ** (mu + 1)) / 2.0
    c = np.cos(np.pi * mu / (2 * n))
    s = np.sin(np.pi * mu / (2 * n))
    return o, o_next, c, s


def derive_array_model(params, n_modes_kept=2):
    """Closed-form energies and couplings (first order in the off-diagonal capacitances)."""
    n = params.n_junctions
    if not 1 <= n_modes_kept <= n - 1:
        raise ParameterDomainError("n_modes_kept must lie in 1..N-1")
    ec = charging_energy_from_ff
    e_cj, e_cgj, e_cgp = ec(params.c_j), ec(params.c_gj), ec(params.c_gp)
    e_cp, e_cc = ec(params.c_p), ec(params.c_c)
    # the resonator is specified loaded: its total capacitance (including C_c) sets omega_r, Z_r
    e_cr, e_lr = resonator_energies(params.omega_r, params.z_r)
    e_t = 1.0 / ((n - 1) / e_cgj + 2.0 / e_cgp + 1.0 / e_cc)

    inv_cf = (
        1.0 / e_cp
        + 1.0 / (n * e_cj)
        + (1.0 - (2.0 / 3.0) * e_t * (n - 1) * (n + 1) / (e_cgj * n) - e_t**2 / e_cc**2) / (4.0 * e_t)
    )
    if inv_cf <= 0:
        raise ValidityError("negative fluxonium charging energy: perturbation theory breaks down")
    e_cf = 1.0 / inv_cf

    mu = np.arange(1, n)
    o, o_next, c, s = _mode_factors(n, mu)
    inv_cmu = 1.0 / e_cj + (1.0 - 2.0 * e_t / (e_cgj * n) * o * c**2 / s**2) / (4.0 * e_cgj * s**2)
    if np.any(inv_cmu <= 0):
        raise ValidityError("negative array-mode charging energy: perturbation theory breaks down")
    e_cmu = 1.0 / inv_cmu

    j_rf = -4.0 * e_cr * e_cf / e_cc * (1.0 - e_t / e_cc)
    j_rmu = -8.0 * e_cr * e_cmu * e_t / (e_cc * e_cgj * np.sqrt(2.0 * n)) * o * c / s**2
    j_fmu = 4.0 * e_cf * e_cmu / e_cgj * c / (np.sqrt(2.0 * n) * s**2) * (o_next - o * e_t / e_cc)
    j_munu = (
        4.0 * np.outer(e_cmu, e_cmu) * e_t / (e_cgj**2 * n)
        * np.outer(o * c / s**2, o * c / s**2)
    )
    np.fill_diagonal(j_munu, 0.0)

    k = slice(0, n_modes_kept)
    if params.e_jj / e_cmu[k].max() < LINEARITY_RATIO:
        warnings.warn("E_Jj / E_Cmu below 20: the linear array-mode approximation is marginal")
    # harmonic zero-point charge fluctuations n_zpf = (E_L / 32 E_C)^(1/4)
    zpf_r = (e_lr / (32.0 * e_cr)) ** 0.25
    zpf_mu = (params.e_jj / (32.0 * e_cmu)) ** 0.25
    return ArrayModel(
        e_cf=float(e_cf),
        e_cr=float(e_cr),
        e_lr=float(e_lr),
        e_t=float(e_t),
        mode_freqs=np.sqrt(8.0 * e_cmu[k] * params.e_jj),
        mode_charging=e_cmu[k],
        j_rf=float(j_rf),
        j_rmu=j_rmu[k],
        j_fmu=j_fmu[k],
        j_munu=j_munu[k, k],
        g_rf=float(j_rf * zpf_r),
        g_rmu=j_rmu[k] * zpf_r * zpf_mu[k],
        g_fmu=j_fmu[k] * zpf_mu[k],
        zpf_r=float(zpf_r),
        zpf_mu=zpf_mu[k],
        w_matrix=standing_waves(n),
        params=params,
    )


def exact_inverse_capacitance(params):
    """Exact C'^{-1} in the (phi_r, phi_f, xi_1..xi_{N-1}) basis, in rad/ns.

    Built from the node capacitance network (each capacitor contributes
    1/(8 E_C) to the quadratic form), mapped to mode coordinates with the
    cyclic node flux phi_0 kept, inverted, and restricted to n_0 = 0.  The
    resonator's own capacitance is chosen so that, together with C_c, it
    matches the loaded E_Cr used by ``derive_array_model``.
    """
    n = params.n_junctions
    ec = charging_energy_from_ff
    e_cr, _ = resonator_energies(params.omega_r, params.z_r)
    k = lambda e: 1.0 / (8.0 * e)
    # nodes: 0 = resonator, 1 + m = array node m (m = 0..N)
    size = n + 2
    cap = np.zeros((size, size))

    def link(a, b, w):
        cap[a, a] += w
        if b is not None:
            cap[b, b] += w
            cap[a, b] -= w
            cap[b, a] -= w

    link(0, None, k(e_cr) - k(ec(params.c_c)))
    link(0, 1, k(ec(params.c_c)))
    link(1, n + 1, k(ec(params.c_p)))
    for m in range(1, n + 1):
        link(m, m + 1, k(ec(params.c_j)))
    for m in range(1, n):
        link(1 + m, None, k(ec(params.c_gj)))
    link(1, None, k(ec(params.c_gp)))
    link(n + 1, None, k(ec(params.c_gp)))

    # q = (phi_r, phi_0, phi_f, xi); node m = phi_0 + sum_{l<=m} theta_l
    w = standing_waves(n)
    to_theta = np.hstack([np.full((n, 1), 1.0 / n), w.T])
    t = np.zeros((size, n + 2))
    t[0, 0] = 1.0
    t[1:, 1] = 1.0
    t[2:, 2:] = np.cumsum(to_theta, axis=0)
    full = t.T @ cap @ t
    inv = np.linalg.inv(full)
    keep = [0] + list(range(2, n + 2))
    # eliminating the cyclic phi_0 (p_0 = 0) removes its row and column of the inverse
    return inv[np.ix_(keep, keep)]


def closed_form_inverse(params):
    """Closed-form counterpart of ``exact_inverse_capacitance`` (all N-1 modes)."""
    model = derive_array_model(params, n_modes_kept=params.n_junctions - 1)
    size = params.n_junctions + 1
    out = np.zeros((size, size))
    diag = np.concatenate([[model.e_cr, model.e_cf], model.mode_charging])
    out[np.diag_indices(size)] = 8.0 * diag
    out[0, 1] = out[1, 0] = model.j_rf
    out[0, 2:] = out[2:, 0] = model.j_rmu
    out[1, 2:] = out[2:, 1] = model.j_fmu
    out[2:, 2:] += model.j_munu
    return out


def capacitance_matrix(params):
    """Exact C' (inverse of ``exact_inverse_capacitance``)."""
    return np.linalg.inv(exact_inverse_capacitance(params))


def max_offdiagonal_ratio(params):
    c = capacitance_matrix(params)
    d = np.sqrt(np.diag(c))
    r = np.abs(c / np.outer(d, d))
    np.fill_diagonal(r, 0.0)
    return float(r.max())


def _residuals(params, e_cf_target, g_rf_target):
    m = derive_array_model(params, n_modes_kept=1)
    return np.array([m.e_cf - e_cf_target, abs(m.g_rf) - g_rf_target])


def solve_capacitances(params, g_rf_target, e_cf_target=ghz(1.0), c_start=(14.0, 8.0),
                       tol=0.1 * SOLVE_TOL, max_iter=100):
    """(c_p, c_c) in fF such that E_Cf and |g_rf| hit their targets.

    Damped Newton in log-capacitance with a finite-difference Jacobian; the
    returned params carry the solved values.
    """
    x = np.log(np.asarray(c_start, dtype=float))

    def f(x):
        try:
            return _residuals(replace(params, c_p=np.exp(x[0]), c_c=np.exp(x[1])),
                              e_cf_target, g_rf_target)
        except (ValidityError, ParameterDomainError):
            return np.array([np.inf, np.inf])

    r = f(x)
    for _ in range(max_iter):
        if np.all(np.abs(r) < tol):
            return replace(params, c_p=float(np.exp(x[0])), c_c=float(np.exp(x[1])))
        jac = np.empty((2, 2))
        for j in range(2):
            h = 1e-6
            dx = np.zeros(2)
            dx[j] = h
            jac[:, j] = (f(x + dx) - f(x - dx)) / (2 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        norm = np.linalg.norm(r)
        while lam > 1e-6:
            trial = x + lam * np.clip(step, -1.0, 1.0)
            rt = f(trial)
            if np.all(np.isfinite(rt)) and np.linalg.norm(rt) < norm:
                x, r = trial, rt
                break
            lam *= 0.5
        else:
            break
    corners = {}
    for cp in (0.1, 1000.0):
        for cc in (0.1, 1000.0):
            corners[(cp, cc)] = to_ghz(f(np.log([cp, cc]))).tolist()
    raise InfeasibleError(
        f"no positive-capacitance root for E_Cf={to_ghz(e_cf_target):.6g} GHz, "
        f"g_rf={to_ghz(g_rf_target):.6g} GHz; residuals (GHz) at corners {corners}"
    )


def capacitance_from_energy(e_c):
    return capacitance_ff_from_charging(e_c)
