"""Quantum branch analysis of the fluxonium-resonator spectrum.

Dressed states are grouped into branches B_i: the zero-photon anchor of
branch i is the eigenstate with maximal overlap with the bare state |i, 0>,
and each branch is extended photon by photon with the unassigned eigenstate
maximizing |<zeta| a^dagger |previous>|.  All branches advance in lockstep; at
each photon level competing claims are settled by a global best match.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, LabelingError
from .hilbert import composite_operator, diagonalize_composite
from .units import to_ghz

DEFAULT_MARGIN = 20
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BranchPoint:
    eigen_index: int
    energy: float
    mean_qubit: float
    mean_photon: float


@dataclass
class BranchSet:
    branches: dict
    unassigned: list
    dims: tuple
    cap: int
    spectrum: object = field(default=None, repr=False)

    def branch_length(self, i_f):
        return len(self.branches[i_f])

    def trajectory(self, i_f):
        """Arrays (mean_photon, mean_qubit, energy) along branch ``i_f``."""
        pts = self.branches[i_f]
        return (
            np.array([p.mean_photon for p in pts]),
            np.array([p.mean_qubit for p in pts]),
            np.array([p.energy for p in pts]),
        )

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch", "step", "mean_photon", "mean_qubit", "energy_GHz"])
            for i_f in sorted(self.branches):
                for step, p in enumerate(self.branches[i_f]):
                    w.writerow([i_f, step, repr(p.mean_photon), repr(p.mean_qubit),
                                repr(to_ghz(p.energy))])


@dataclass(frozen=True)
class CriticalPhotonResult:
    n_crit: float
    n_crit_ground: float
    n_crit_excited: float
    saturated: bool
    branch_length: int
    saturated_ground: bool = False
    saturated_excited: bool = False


def _photon_ladder_overlaps(spectrum, composite):
    """Matrix A[z, p] = |<z| a^dagger |p>| over all eigenvector pairs."""
    adag = composite_operator(composite, "adag")
    v = spectrum.vectors
    if spectrum.parity is None:
        return np.abs(v.conj().T @ (adag @ v))
    # a^dagger flips total parity: only opposite-sector blocks are non-zero
    out = np.zeros((v.shape[1], v.shape[1]))
    rows = spectrum.sector_rows
    for s in (1, -1):
        src_cols = np.flatnonzero(spectrum.parity == s)
        dst_cols = np.flatnonzero(spectrum.parity == -s)
        src = v[np.ix_(rows[s], src_cols)]
        dst = v[np.ix_(rows[-s], dst_cols)]
        lifted = adag[rows[-s]][:, rows[s]] @ src
        out[np.ix_(dst_cols, src_cols)] = np.abs(dst.conj().T @ lifted)
    return out


def _best_match(candidates):
    """Greedy global assignment of (score, eigen_index, branch) triples."""
    candidates.sort(key=lambda c: (-round(c[0] / TIE_TOL) * TIE_TOL, c[1], c[2]))
    taken_states, taken_branches, result = set(), set(), {}
    for score, state, branch in candidates:
        if state in taken_states or branch in taken_branches:
            continue
        result[branch] = state
        taken_states.add(state)
        taken_branches.add(branch)
    return result


def assign_branches(composite, n_branches=None, margin=DEFAULT_MARGIN, spectrum=None):
    n_f, n_r = composite.dims
    if n_branches is None:
        n_branches = n_f
    if n_branches > n_f:
        raise ConfigurationError("n_branches cannot exceed the number of fluxonium levels")
    cap = n_r - margin
    if cap < 1:
        raise ConfigurationError("resonator truncation too small for the cap margin")
    if spectrum is None:
        spectrum = diagonalize_composite(composite)
    mean_qubit, mean_photon = spectrum.populations()
    dim = len(spectrum.energies)

    anchor_overlap = np.abs(spectrum.vectors[[composite.index(i, 0) for i in range(n_branches)], :])
    best = np.argmax(anchor_overlap, axis=1)
    seen = {}
    for i, k in enumerate(best):
        if k in seen:
            raise LabelingError(
                f"anchors |{seen[k]},0> and |{i},0> both claim eigenstate {k}"
            )
        seen[k] = i

    free = np.ones(dim, dtype=bool)
    chains = {}
    for i, k in enumerate(best):
        chains[i] = [int(k)]
        free[k] = False

    ladder = _photon_ladder_overlaps(spectrum, composite)
    active = {b for b in range(n_branches) if mean_photon[chains[b][-1]] <= cap}
    depth = n_branches + 1
    while active:
        candidates = []
        for b in sorted(active):
            scores = np.where(free, ladder[:, chains[b][-1]], -1.0)
            top = np.argpartition(-scores, min(depth, dim - 1))[: depth + 1]
            for z in top:
                if scores[z] > 0:
                    candidates.append((float(scores[z]), int(z), b))
        picks = _best_match(candidates)
        for b in sorted(active):
            if b not in picks:
                active.discard(b)
                continue
            chains[b].append(picks[b])
            free[picks[b]] = False
            # stop once the branch reaches the truncation-safe photon cap
            if mean_photon[picks[b]] > cap:
                active.discard(b)

    branches = {
        b: [
            BranchPoint(k, float(spectrum.energies[k]), float(mean_qubit[k]), float(mean_photon[k]))
            for k in chain
        ]
        for b, chain in chains.items()
    }
    return BranchSet(branches, [int(k) for k in np.flatnonzero(free)], (n_f, n_r), cap, spectrum)


def _first_crossing(points, threshold):
    for p in points:
        if p.mean_qubit >= threshold:
            return p.mean_photon
    return None


def critical_photon_number(branch_set, thresholds=(2.0, 3.0)):
    for i in (0, 1):
        if i not in branch_set.branches or len(branch_set.branches[i]) < 2:
            raise ConfigurationError("computational branches 0 and 1 need at least two points")
    values, saturated = [], []
    for i, thr in zip((0, 1), thresholds):
        hit = _first_crossing(branch_set.branches[i], thr)
        saturated.append(hit is None)
        values.append(float(branch_set.cap) if hit is None else hit)
    n_crit = min(values)
    sat = saturated[int(np.argmin(values))] if values[0] != values[1] else all(saturated)
    return CriticalPhotonResult(
        n_crit=n_crit,
        n_crit_ground=values[0],
        n_crit_excited=values[1],
        saturated=bool(sat),
        branch_length=min(len(branch_set.branches[0]), len(branch_set.branches[1])),
        saturated_ground=saturated[0],
        saturated_excited=saturated[1],
    )


def branch_projectors(branch_set, i_f):
    """Projector onto the span of the dressed states forming branch ``i_f``."""
    idx = [p.eigen_index for p in branch_set.branches[i_f]]
    v = branch_set.spectrum.vectors[:, idx]
    return v @ v.conj().T


def branch_vectors(branch_set, i_f):
    idx = [p.eigen_index for p in branch_set.branches[i_f]]
    return branch_set.spectrum.vectors[:, idx]
