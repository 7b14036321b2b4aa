import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxmist.circuit import CircuitParams, derive_array_model
from fluxmist.errors import ConfigurationError
from fluxmist.floquet import (
    ARRAY_RECORD_HEADER,
    ArrayScanGrid,
    build_semiclassical,
    critical_photon_scan,
    floquet_critical_photon,
    floquet_modes,
    fold,
    period_propagator,
    run_array_scan,
    static_labels,
    track_floquet_branches,
    unitarity_defect,
)
from fluxmist.units import ghz, mhz

WD = ghz(7.0)


@pytest.fixture(scope="module")
def qubit_only(light):
    return build_semiclassical(light, WD, mhz(50.0), n_f=10)


@pytest.fixture(scope="module")
def with_modes(light):
    model = derive_array_model(CircuitParams(c_gj=0.5))
    return build_semiclassical(light, WD, mhz(50.0), array=model, n_f=6, mode_levels=3)


def test_system_structure(with_modes):
    s = with_modes
    assert s.dims == (6, 3, 3) and s.dim == 54
    for m in (s.static_part, s.drive_part):
        assert np.abs(m - m.conj().T).max() == 0
    with pytest.raises(ConfigurationError):
        build_semiclassical(s.fluxonium, 0.0, 1.0)


@given(g=st.floats(0.001, 1.0), n_bar=st.floats(1e-6, 200.0), t=st.floats(0.0, 1.0))
def test_drive_scaling_exact(light, g, n_bar, t):
    a = build_semiclassical(light, WD, g, n_f=6)
    b = build_semiclassical(light, WD, 2 * g, n_f=6)
    assert np.array_equal(2 * a.drive_part, b.drive_part)
    assert np.array_equal(a.hamiltonian(n_bar, t), b.hamiltonian(n_bar / 4, t))


@given(q=st.floats(-1e3, 1e3), w=st.floats(0.1, 100.0))
def test_fold_range(q, w):
    f = float(fold(q, w))
    assert -w / 2 < f <= w / 2 + 1e-12 * w
    k = (q - f) / w
    assert abs(k - round(k)) < 1e-9 * max(1.0, abs(q) / w)


@pytest.mark.parametrize("fixture", ["qubit_only", "with_modes"])
def test_zero_drive_modes(fixture, request):
    s = request.getfixturevalue(fixture)
    quasi, vecs, defect = floquet_modes(s, 0.0)
    w, v, _ = static_labels(s)
    overlap = np.abs(v.conj().T @ vecs) ** 2
    assert overlap.max(axis=1).min() > 0.999
    best = overlap.argmax(axis=1)
    assert np.allclose(quasi[best], fold(w, s.omega_d), atol=1e-9)
    assert defect < 1e-10


@pytest.mark.invariant
def test_unitarity_under_drive(with_modes):
    quasi, vecs, defect = floquet_modes(with_modes, 50.0)
    assert defect < 1e-10
    assert np.all(np.isreal(quasi))
    assert np.all((quasi > -WD / 2) & (quasi <= WD / 2))
    assert np.abs(vecs.conj().T @ vecs - np.eye(with_modes.dim)).max() < 1e-10


def test_fourth_order_convergence(light):
    s = build_semiclassical(light, WD, mhz(200.0), n_f=6)
    ref = period_propagator(s, 20.0, 1024)
    err = [np.linalg.norm(period_propagator(s, 20.0, n) - ref, 2) for n in (32, 64)]
    assert 10 < err[0] / err[1] < 22
    assert unitarity_defect(ref) < 1e-12


def test_ac_stark_shift(light):
    # fluxonium only: quasi-energy shift at small drive against second-order Floquet theory
    g, n_bar = mhz(50.0), 2.0
    s = build_semiclassical(light, WD, g)
    bs = track_floquet_branches(s, n_bar, step=n_bar, labels=[(0,), (1,)])
    e = light.energies - light.energies[0]
    v = 0.5 * np.sqrt(n_bar) * 2 * g * np.abs(light.charge_elements)  # cos -> two rotating halves
    for k in (0, 1):
        d = e[k] - e
        mask = np.arange(len(e)) != k
        shift = np.sum((v[mask, k] ** 2) * (1 / (d[mask] - WD) + 1 / (d[mask] + WD)))
        pts = bs.branches[(k,)]
        got = float(fold(pts[-1].quasi_energy - pts[0].quasi_energy, WD))
        assert abs(shift) > 1e-5
        assert got == pytest.approx(shift, rel=0.05)


def test_flat_branches_without_resonances(qubit_only):
    bs = track_floquet_branches(qubit_only, 10.0, step=1.0, labels=[(0,), (1,)])
    for lab in ((0,), (1,)):
        n, q, modes = bs.trajectory(lab)
        assert np.ptp(q) < 0.05 and modes.shape == (len(n), 0)
        assert bs.lost[lab] is None
        assert min(p.overlap for p in bs.branches[lab]) > 0.5
    r = floquet_critical_photon(bs)
    assert r.saturated and r.n_crit == 10.0


@pytest.mark.invariant
def test_partition_per_step(light):
    s = build_semiclassical(light, WD, mhz(300.0), n_f=6)
    bs = track_floquet_branches(s, 3.0, step=1.0)
    for step in range(4):
        claimed = sorted(bs.branches[lab][step].quasi_energy for lab in bs.branches)
        if step == 0:
            continue
        quasi, _, _ = floquet_modes(s, float(step))
        assert np.allclose(claimed, np.sort(quasi), atol=1e-12)


def test_tracking_inputs(qubit_only):
    with pytest.raises(ConfigurationError):
        track_floquet_branches(qubit_only, 1.0, step=0.0)
    with pytest.raises(ConfigurationError):
        track_floquet_branches(qubit_only, 1.0, labels=[(99,)])
    with pytest.raises(ConfigurationError):
        floquet_modes(qubit_only, -1.0)


def test_scan_and_csv(with_modes, tmp_path):
    bs, r = critical_photon_scan(with_modes, 2.0, step=1.0, steps_per_period=128)
    assert r.n_crit == min(r.n_crit_ground, r.n_crit_excited)
    bs.write_csv(tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["label", "n_bar", "quasi_energy_GHz", "mean_qubit", "mode_pops", "overlap"]
    assert rows[1][0] == "0-0-0" and len(rows[1][4].split(";")) == 2


def test_array_scan_resume(light, tmp_path):
    grid = ArrayScanGrid(omega_d=(ghz(7.0),), c_gj=(0.1, 0.5), n_f=6, n_modes=1, mode_levels=3,
                         n_bar_max=1.0, step=1.0, steps_per_period=64)
    path = tmp_path / "a.csv"
    rows = run_array_scan(grid, path, basis=light)
    assert [r["error"] for r in rows] == ["", ""]
    assert float(rows[1]["mode1_GHz"]) == pytest.approx(6.36, abs=0.01)
    first = path.read_bytes()
    lines = first.decode().splitlines()
    assert lines[0].split(",") == ARRAY_RECORD_HEADER
    # drop the last row and resume: the file is rebuilt identically
    path.write_text("\n".join(lines[:-1]) + "\n")
    run_array_scan(grid, path, basis=light)
    assert path.read_bytes() == first


def test_array_scan_records_errors(light):
    grid = ArrayScanGrid(omega_d=(ghz(7.0),), c_gj=(0.5,), chi_target=0.0, n_f=6, n_modes=1,
                         mode_levels=3, n_bar_max=1.0, step=1.0, steps_per_period=64)
    (row,) = run_array_scan(grid, basis=light)
    assert row["error"] == "NumericError" and row["ncrit"] == ""
