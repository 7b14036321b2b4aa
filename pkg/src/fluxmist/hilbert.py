"""Fock-space operators, fluxonium and fluxonium-resonator Hamiltonians.

Frequencies are angular (rad/ns).  The fluxonium is represented in the
harmonic-oscillator basis of its LC part and truncated to ``n_keep``
eigenstates after diagonalization; the composite system is ordered
fluxonium-major, i.e. basis index ``i_f * n_levels + n_r``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigurationError, NumericError, ParameterDomainError

DEFAULT_N_FOCK = 1000
DEFAULT_N_KEEP = 20
DEFAULT_N_LEVELS = 200
DEFAULT_MAX_DIM = 8000


def _freeze(arr):
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FluxoniumParams:
    """Circuit energies (rad/ns) and external flux in units of the flux quantum."""

    e_j: float
    e_c: float
    e_l: float
    phi_ext: float = 0.5

    def __post_init__(self):
        for name in ("e_j", "e_c", "e_l"):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0.0 <= self.phi_ext < 1.0:
            raise ParameterDomainError(f"phi_ext must lie in [0, 1), got {self.phi_ext!r}")

    @property
    def phi_zpf(self):
        return (8.0 * self.e_c / self.e_l) ** 0.25

    @property
    def n_zpf(self):
        return (self.e_l / (32.0 * self.e_c)) ** 0.25

    @property
    def plasma_frequency(self):
        return np.sqrt(8.0 * self.e_c * self.e_l)

    @classmethod
    def from_ratios(cls, ej_over_ec, el_over_ec, e_c, phi_ext=0.5):
        return cls(e_j=ej_over_ec * e_c, e_c=e_c, e_l=el_over_ec * e_c, phi_ext=phi_ext)


@dataclass(frozen=True)
class ResonatorParams:
    omega_r: float
    kappa: float = 0.0
    n_levels: int = DEFAULT_N_LEVELS

    def __post_init__(self):
        if not self.omega_r > 0:
            raise ParameterDomainError("omega_r must be positive")
        if self.kappa < 0:
            raise ParameterDomainError("kappa must be non-negative")
        if self.n_levels < 2:
            raise ParameterDomainError("n_levels must be at least 2")


class CouplingKind(str, enum.Enum):
    CAPACITIVE = "capacitive"
    INDUCTIVE = "inductive"


@dataclass(frozen=True)
class CouplingSpec:
    strength_g: float
    kind: CouplingKind = CouplingKind.CAPACITIVE

    def __post_init__(self):
        if self.strength_g < 0:
            raise ParameterDomainError("coupling strength must be non-negative")
        object.__setattr__(self, "kind", CouplingKind(self.kind))


@dataclass(frozen=True)
class FluxoniumEigenbasis:
    """Lowest eigenpairs of a fluxonium and its operators in that eigenbasis.

    ``parity`` holds the +/-1 eigenvalue of phi -> -phi for each state when the
    potential is symmetric (phi_ext = 0 or 1/2), otherwise ``None``.
    """

    energies: np.ndarray
    charge_elements: np.ndarray
    phase_elements: np.ndarray
    params: FluxoniumParams
    n_fock_used: int
    parity: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "energies", _freeze(self.energies))
        object.__setattr__(self, "charge_elements", _freeze(self.charge_elements))
        object.__setattr__(self, "phase_elements", _freeze(self.phase_elements))
        if self.parity is not None:
            object.__setattr__(self, "parity", _freeze(self.parity))

    @property
    def n_keep(self):
        return len(self.energies)

    def transition(self, i, j):
        """omega_{ij} = omega_j - omega_i."""
        return self.energies[j] - self.energies[i]

    def coupling_operator(self, kind):
        kind = CouplingKind(kind)
        return self.charge_elements if kind is CouplingKind.CAPACITIVE else self.phase_elements


@dataclass(frozen=True)
class CompositeHamiltonian:
    matrix: np.ndarray
    basis_labels: list
    fluxonium: FluxoniumEigenbasis
    resonator: ResonatorParams
    coupling: CouplingSpec

    @property
    def dims(self):
        return self.fluxonium.n_keep, self.resonator.n_levels

    def index(self, i_f, n_r):
        return i_f * self.resonator.n_levels + n_r


@dataclass
class CompositeSpectrum:
    """Full eigendecomposition of a composite Hamiltonian.

    Columns of ``vectors`` are eigenvectors sorted by energy.  When the system
    conserves total parity, ``parity`` gives each eigenvector's sector and
    ``sector_rows`` the basis rows spanning each sector.
    """

    energies: np.ndarray
    vectors: np.ndarray
    dims: tuple
    parity: np.ndarray | None = None
    sector_rows: dict = field(default_factory=dict)

    def populations(self):
        """(mean fluxonium index, mean photon number) for every eigenvector."""
        n_f, n_r = self.dims
        prob = np.abs(self.vectors) ** 2
        prob = prob.reshape(n_f, n_r, -1)
        mean_qubit = np.einsum("i,ijk->k", np.arange(n_f, dtype=float), prob)
        mean_photon = np.einsum("j,ijk->k", np.arange(n_r, dtype=float), prob)
        return mean_qubit, mean_photon


# -- Fock-space primitives ---------------------------------------------------


def destroy(n):
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)


def create(n):
    return destroy(n).T.copy()


def number(n):
    return np.diag(np.arange(n, dtype=float))


def fock_phase_operator(params, n_fock):
    b = destroy(n_fock)
    return params.phi_zpf / np.sqrt(2.0) * (b + b.T)


def fock_charge_operator(params, n_fock):
    b = destroy(n_fock)
    return 1j * params.n_zpf * (b.T - b)


def _phase_spectral(params, n_fock):
    """Eigendecomposition of the (tridiagonal, real) truncated phase operator."""
    off = params.phi_zpf / np.sqrt(2.0) * np.sqrt(np.arange(1, n_fock, dtype=float))
    return sla.eigh_tridiagonal(np.zeros(n_fock), off)


def build_fluxonium_hamiltonian(params, n_fock=DEFAULT_N_FOCK):
    """Fluxonium Hamiltonian in the Fock basis of its LC part.

    The cosine is evaluated as (D + D^dagger)/2 with D = exp(i(phi - 2 pi phi_ext)),
    using the spectral decomposition of the truncated phase operator, so no
    series truncation of the cosine enters.
    """
    if n_fock < 50:
        raise ConfigurationError("n_fock must be at least 50")
    if not isinstance(params, FluxoniumParams):
        raise ParameterDomainError("params must be FluxoniumParams")
    lam, q = _phase_spectral(params, n_fock)
    displacement = np.exp(1j * (lam - 2.0 * np.pi * params.phi_ext))
    # (D + D^dagger)/2 in the phase eigenbasis is the real part of the phases
    cos_phi = (q * displacement.real) @ q.T
    h = -params.e_j * cos_phi
    h[np.diag_indices(n_fock)] += params.plasma_frequency * (np.arange(n_fock) + 0.5)
    return 0.5 * (h + h.T)


def _fix_gauge(vectors):
    """Make the largest-magnitude component of every column real and positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    pivot = vectors[idx, np.arange(vectors.shape[1])]
    phase = pivot / np.abs(pivot)
    return vectors / phase[np.newaxis, :]


def diagonalize_fluxonium(params, n_fock=DEFAULT_N_FOCK, n_keep=DEFAULT_N_KEEP):
    if n_keep > n_fock / 10:
        raise ConfigurationError(f"n_keep={n_keep} exceeds n_fock/10 (n_fock={n_fock})")
    h = build_fluxonium_hamiltonian(params, n_fock)
    try:
        energies, vectors = sla.eigh(h, subset_by_index=[0, n_keep - 1])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"fluxonium eigensolver failed: {exc}") from exc
    residual = np.linalg.norm(h @ vectors - vectors * energies)
    if not residual < 1e-8 * max(1.0, np.abs(energies).max()):
        raise NumericError("fluxonium eigensolver residual too large", residual=residual)
    vectors = _fix_gauge(vectors)

    b = destroy(n_fock)
    # <i|n|j> = i n_zpf <i|(b^dag - b)|j>; vectors are real so this is imaginary
    bt_minus_b = vectors.T @ (b.T - b) @ vectors
    charge = 1j * params.n_zpf * bt_minus_b
    phase = params.phi_zpf / np.sqrt(2.0) * (vectors.T @ (b + b.T) @ vectors)
    charge = 0.5 * (charge + charge.conj().T)
    phase = 0.5 * (phase + phase.T)

    parity = None
    if params.phi_ext in (0.0, 0.5):
        signs = (-1.0) ** np.arange(n_fock)
        p = np.einsum("k,kj->j", signs, vectors**2)
        if np.all(np.abs(np.abs(p) - 1.0) < 1e-8):
            parity = np.sign(p).astype(int)
    return FluxoniumEigenbasis(
        energies=energies,
        charge_elements=charge,
        phase_elements=phase.astype(complex),
        params=params,
        n_fock_used=n_fock,
        parity=parity,
    )


def truncate_charge_bands(basis, d):
    """Copy of ``basis`` with charge elements beyond the d-th off-diagonal set to zero."""
    if d < 1:
        raise ConfigurationError("band count d must be at least 1")
    n = basis.n_keep
    i, j = np.indices((n, n))
    charge = np.where(np.abs(i - j) > d, 0.0, basis.charge_elements)
    return replace(basis, charge_elements=charge)


def build_composite(basis, res, coupling, max_dim=DEFAULT_MAX_DIM):
    n_f, n_r = basis.n_keep, res.n_levels
    if n_f * n_r > max_dim:
        raise ConfigurationError(f"composite dimension {n_f * n_r} exceeds budget {max_dim}")
    a = destroy(n_r)
    g = coupling.strength_g
    if coupling.kind is CouplingKind.CAPACITIVE:
        interaction = np.kron(basis.charge_elements, -1j * g * (a - a.T))
    else:
        interaction = np.kron(basis.phase_elements, g * (a + a.T))
    diag = (basis.energies[:, None] + res.omega_r * np.arange(n_r)[None, :]).ravel()
    matrix = interaction
    matrix[np.diag_indices_from(matrix)] += diag
    matrix = 0.5 * (matrix + matrix.conj().T)
    if np.abs(matrix.imag).max(initial=0.0) <= 1e-14 * np.abs(matrix).max():
        matrix = matrix.real.copy()
    labels = [(i, n) for i in range(n_f) for n in range(n_r)]
    return CompositeHamiltonian(matrix, labels, basis, res, coupling)


def composite_operator(composite, which):
    """Sparse resonator operator (``'a'``, ``'adag'``, ``'n'``) on the composite space."""
    n_f, n_r = composite.dims
    a = sp.diags(np.sqrt(np.arange(1, n_r, dtype=float)), 1, format="csr")
    op = {"a": a, "adag": a.T.tocsr(), "n": sp.diags(np.arange(n_r, dtype=float))}[which]
    return sp.kron(sp.identity(n_f), op, format="csr")


def total_parity(composite):
    """Parity of each composite basis state, or None without a parity symmetry."""
    par = composite.fluxonium.parity
    if par is None:
        return None
    n_r = composite.resonator.n_levels
    return (par[:, None] * (-1) ** np.arange(n_r)[None, :]).ravel()


def diagonalize_composite(composite):
    """Full eigendecomposition, split into total-parity sectors when possible."""
    h = composite.matrix
    parity = total_parity(composite)
    if parity is not None:
        rows = {s: np.flatnonzero(parity == s) for s in (1, -1)}
        leak = np.abs(h[np.ix_(rows[1], rows[-1])]).max(initial=0.0)
        if leak > 1e-12 * np.abs(h).max():
            parity = None
    dim = h.shape[0]
    try:
        if parity is None:
            energies, vectors = np.linalg.eigh(h)
            sectors = None
        else:
            blocks = []
            for s in (1, -1):
                idx = rows[s]
                e_s, v_s = np.linalg.eigh(h[np.ix_(idx, idx)])
                blocks.append((s, idx, e_s, v_s))
            e_all = np.concatenate([blk[2] for blk in blocks])
            order = np.argsort(e_all, kind="stable")
            energies = e_all[order]
            position = np.empty(dim, dtype=int)
            position[order] = np.arange(dim)
            vectors = np.zeros((dim, dim), dtype=h.dtype)
            sectors = np.empty(dim, dtype=int)
            offset = 0
            for s, idx, e_s, v_s in blocks:
                cols = position[offset : offset + len(e_s)]
                vectors[np.ix_(idx, cols)] = v_s
                sectors[cols] = s
                offset += len(e_s)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"composite eigensolver failed: {exc}") from exc
    vectors = _fix_gauge(vectors)
    sector_rows = {} if parity is None else rows
    return CompositeSpectrum(energies, vectors, composite.dims, sectors, sector_rows)


def is_hermitian(matrix, rtol=1e-12):
    scale = np.abs(matrix).max(initial=0.0)
    return np.abs(matrix - matrix.conj().T).max(initial=0.0) <= rtol * max(scale, 1e-300)


# -- binary matrix cache -----------------------------------------------------

MAGIC = b"FXH1"


def write_fxh1(path, matrices):
    """Write complex matrices as FXH1 records.

    Layout: ``b"FXH1"``, uint32 record count, then per record uint64 rows,
    uint64 cols and rows*cols little-endian complex128 values in row-major order.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(matrices)))
        for m in matrices:
            m = np.atleast_2d(np.asarray(m, dtype="<c16"))
            fh.write(struct.pack("<QQ", *m.shape))
            fh.write(np.ascontiguousarray(m).tobytes(order="C"))


def read_fxh1(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigurationError(f"{path} is not an FXH1 file")
        (count,) = struct.unpack("<I", fh.read(4))
        out = []
        for _ in range(count):
            rows, cols = struct.unpack("<QQ", fh.read(16))
            buf = fh.read(16 * rows * cols)
            out.append(np.frombuffer(buf, dtype="<c16").reshape(rows, cols).copy())
    return out


def eigenbasis_key(params, n_fock, n_keep):
    payload = json.dumps(
        {"e_j": params.e_j, "e_c": params.e_c, "e_l": params.e_l, "phi_ext": params.phi_ext,
         "n_fock": n_fock, "n_keep": n_keep},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class EigenbasisCache:
    """Content-addressed FXH1 store of fluxonium eigenbases."""

    def __init__(self, directory=None):
        self.directory = None if directory is None else Path(directory)
        self._memory = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def get(self, params, n_fock=DEFAULT_N_FOCK, n_keep=DEFAULT_N_KEEP):
        key = eigenbasis_key(params, n_fock, n_keep)
        if key in self._memory:
            return self._memory[key]
        path = None if self.directory is None else self.directory / f"{key}.fxh1"
        if path is not None and path.exists():
            energies, charge, phase, parity = read_fxh1(path)
            par = parity.real.astype(int).ravel()
            basis = FluxoniumEigenbasis(energies.real.ravel(), charge, phase, params, n_fock,
                                        None if not par.any() else par)
        else:
            basis = diagonalize_fluxonium(params, n_fock, n_keep)
            if path is not None:
                par = np.zeros(n_keep) if basis.parity is None else basis.parity
                write_fxh1(path, [basis.energies, basis.charge_elements, basis.phase_elements, par])
        self._memory[key] = basis
        return basis
