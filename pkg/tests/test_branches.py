import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxmist.branches import (
    assign_branches,
    branch_projectors,
    branch_vectors,
    critical_photon_number,
)
from fluxmist.errors import ConfigurationError
from fluxmist.hilbert import CouplingKind, CouplingSpec, ResonatorParams, build_composite
from fluxmist.units import ghz, mhz


def _composite(basis, f, g, n_r=50, kind=CouplingKind.CAPACITIVE):
    return build_composite(basis, ResonatorParams(ghz(f), n_levels=n_r), CouplingSpec(g, kind))


@pytest.fixture(scope="module")
def readout_branches(light):
    return assign_branches(_composite(light, 7.925, mhz(227.5), n_r=60))


def test_zero_coupling_ladders(light):
    bs = assign_branches(_composite(light, 7.3, 0.0, n_r=40))
    for i, pts in bs.branches.items():
        assert [round(p.mean_photon) for p in pts] == list(range(len(pts)))
        assert all(abs(p.mean_qubit - i) < 1e-12 for p in pts)
    r = critical_photon_number(bs)
    assert r.saturated and r.n_crit == bs.cap == 20


@pytest.mark.invariant
def test_partition_and_anchors(readout_branches):
    bs = readout_branches
    used = [p.eigen_index for pts in bs.branches.values() for p in pts]
    assert len(used) == len(set(used))
    assert sorted(used + bs.unassigned) == list(range(bs.dims[0] * bs.dims[1]))
    for pts in bs.branches.values():
        assert pts[0].mean_photon < 0.5


def test_monotone_photon_growth(readout_branches):
    for i in (0, 1):
        n, q, _ = readout_branches.trajectory(i)
        step = np.diff(n)
        assert np.all(np.abs(step - 1) <= 0.5)
        assert np.all(q < 2)


def test_determinism(light):
    comp = _composite(light, 8.6, mhz(150), n_r=40)
    a, b = assign_branches(comp), assign_branches(comp)
    assert {i: [p.eigen_index for p in v] for i, v in a.branches.items()} == {
        i: [p.eigen_index for p in v] for i, v in b.branches.items()
    }


@pytest.mark.invariant
def test_projectors(readout_branches):
    p0 = branch_projectors(readout_branches, 0)
    p1 = branch_projectors(readout_branches, 1)
    assert np.abs(p0 @ p0 - p0).max() < 1e-10
    assert np.abs(p0 @ p1).max() < 1e-10
    assert np.trace(p0).real == pytest.approx(readout_branches.branch_length(0), abs=1e-10)
    v = branch_vectors(readout_branches, 1)
    assert np.allclose(v.conj().T @ v, np.eye(v.shape[1]), atol=1e-10)


@given(
    f=st.floats(4.0, 10.0),
    g=st.floats(0.0, mhz(300)),
    kind=st.sampled_from(list(CouplingKind)),
)
def test_branch_properties(light, f, g, kind):
    bs = assign_branches(_composite(light, f, g, n_r=30, kind=kind))
    used = [p.eigen_index for pts in bs.branches.values() for p in pts]
    assert len(used) == len(set(used))
    assert len(used) + len(bs.unassigned) == 600
    r = critical_photon_number(bs)
    assert r.n_crit == min(r.n_crit_ground, r.n_crit_excited)
    if r.saturated:
        assert r.n_crit == bs.cap


def test_branch_swap_near_eleven_photons(light):
    bs = assign_branches(_composite(light, 9.37, mhz(289), n_r=200))
    n1, q1, _ = bs.trajectory(1)
    n12, q12, _ = bs.trajectory(12)
    # branch 1 takes on twelfth-level character and vice versa, both near 11 photons
    k1 = np.argmax(q1 > 6)
    k12 = np.argmax(q12 < 6)
    assert q1[k1] > 6 and q12[k12] < 6
    assert abs(n1[k1] - 11) <= 1 and abs(n12[k12] - 11) <= 1
    r = critical_photon_number(bs)
    assert r.n_crit == pytest.approx(11, abs=1)
    assert r.n_crit == r.n_crit_excited and not r.saturated


def test_critical_needs_computational_branches(light):
    bs = assign_branches(_composite(light, 7.3, 0.0, n_r=25), n_branches=1)
    with pytest.raises(ConfigurationError):
        critical_photon_number(bs)


def test_configuration_errors(light):
    comp = _composite(light, 7.3, 0.0, n_r=15)
    with pytest.raises(ConfigurationError):
        assign_branches(comp)  # cap below one photon
    with pytest.raises(ConfigurationError):
        assign_branches(_composite(light, 7.3, 0.0, n_r=25), n_branches=21)


def test_thresholds_configurable(readout_branches):
    r = critical_photon_number(readout_branches, thresholds=(0.01, 1.01))
    assert not r.saturated and r.n_crit < 5


def test_csv_export(readout_branches, tmp_path):
    readout_branches.write_csv(tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["branch", "step", "mean_photon", "mean_qubit", "energy_GHz"]
    assert len(rows) - 1 == sum(len(v) for v in readout_branches.branches.values())
