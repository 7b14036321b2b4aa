import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.special import erfc

from fluxmist.dynamics import (
    CoherentField,
    DrivePulse,
    TrajectoryRecord,
    assignment_error,
    default_drive_frequency,
    evolve,
    leakage_final,
    readout_metrics,
    snr_curve,
)
from fluxmist.errors import ConfigurationError
from fluxmist.hilbert import (
    CouplingSpec,
    FluxoniumParams,
    ResonatorParams,
    build_composite,
    diagonalize_fluxonium,
)
from fluxmist.units import ghz, mhz
from oracles import lab_frame_lindblad

KAPPA = mhz(5.0)


@pytest.fixture(scope="module")
def small():
    """Five-level light fluxonium with a 7.925 GHz resonator at g = 227.5 MHz."""
    basis = diagonalize_fluxonium(FluxoniumParams.from_ratios(4.0, 0.75, ghz(1.0)), 400, 5)
    comp = build_composite(basis, ResonatorParams(ghz(7.925), n_levels=40), CouplingSpec(mhz(227.5)))
    return basis, comp


def _pulse(eps, wd, t1=20.0, t2=0.0, ring=20.0):
    return DrivePulse(eps, eps, wd, t1=t1, t2=t2, ring_down=ring)


def test_pulse_shape():
    p = DrivePulse(1.0, 2.0, 5.0)
    assert p.duration == 600.0
    assert list(p.envelope([0.0, 99.9, 100.0, 299.0, 300.0, 599.0])) == [1, 1, 2, 2, 0, 0]
    assert [s[2] for s in DrivePulse(1.0, 2.0, 5.0, t2=0.0).segments()] == [1.0, 0.0]
    with pytest.raises(ConfigurationError):
        DrivePulse(1.0, 1.0, 5.0, t1=-1.0)
    with pytest.raises(ConfigurationError):
        DrivePulse(1.0, 1.0, 0.0)


@given(
    eps=st.floats(0.01, 1.0),
    detune=st.sampled_from([0.0, -0.3, 0.2]),
    kappa=st.sampled_from([0.0, 0.03]),
)
def test_coherent_field_matches_ode(eps, detune, kappa):
    wt = ghz(7.0)
    pulse = DrivePulse(eps, 0.6 * eps, wt + detune, t1=7.0, t2=5.0, ring_down=8.0)
    field = CoherentField(pulse, wt, kappa)

    def rhs(t, y):
        a = y[0] + 1j * y[1]
        d = -(1j * wt + 0.5 * kappa) * a + pulse.envelope(t) * np.cos(pulse.omega_d * t)
        return [d.real, d.imag]

    ts = np.linspace(0.0, pulse.duration, 41)
    ref = np.zeros(len(ts), complex)
    y = [0.0, 0.0]
    # integrate piecewise so the envelope jumps fall on step boundaries
    for t0, t_end, _ in pulse.segments():
        sol = solve_ivp(rhs, (t0, t_end), y, rtol=1e-11, atol=1e-13, method="DOP853", dense_output=True)
        mask = (ts >= t0) & (ts <= t_end)
        z = sol.sol(ts[mask])
        ref[mask] = z[0] + 1j * z[1]
        y = sol.y[:, -1]
    assert np.abs(field(ts) - ref).max() < 1e-7 * max(1.0, np.abs(ref).max())


def test_zero_drive(small):
    basis, comp = small
    ts = np.arange(0, 41, 4.0)
    rec = evolve(comp, _pulse(0.0, ghz(7.9)), 0.0, initial=0, sample_times=ts, frame_levels=4)
    # only integrator drift (rtol 1e-8) remains
    assert np.abs(rec.leakage).max() < 1e-6
    assert leakage_final(rec) == pytest.approx(0.0, abs=1e-6)
    assert np.ptp(rec.mean_photon) < 1e-6 and rec.mean_photon.max() < 0.05
    # with damping the bare-operator dissipator slowly mixes dressed states
    damped = evolve(comp, _pulse(0.0, ghz(7.9)), KAPPA, initial=0, sample_times=ts, frame_levels=4)
    assert 0 < leakage_final(damped) < 1e-3


def test_against_lab_frame(small):
    basis, comp = small
    wd = default_drive_frequency(basis, ghz(7.925), CouplingSpec(mhz(227.5)))
    eps = mhz(30.0)
    ts = np.linspace(0.0, 12.0, 7)
    rec = evolve(comp, _pulse(eps, wd, t1=12.0, ring=0.0), KAPPA, initial=1, sample_times=ts,
                 frame_levels=6, rtol=1e-10, atol=1e-12)
    field, photons = lab_frame_lindblad(
        basis.energies - basis.energies[0], basis.charge_elements, mhz(227.5), ghz(7.925), 14,
        KAPPA, eps, wd, 1, ts,
    )
    assert photons.max() > 1.0
    assert np.abs(rec.mean_field - field).max() < 2e-3 * np.abs(field).max()
    assert np.abs(rec.mean_photon - photons).max() < 2e-3 * photons.max()


@pytest.fixture(scope="module")
def driven(small):
    basis, comp = small
    wd = default_drive_frequency(basis, ghz(7.925), CouplingSpec(mhz(227.5)))
    ts = np.arange(0.0, 101.0, 2.0)
    rec = evolve(comp, _pulse(mhz(30.0), wd, t1=30.0, ring=70.0), KAPPA, initial=1, sample_times=ts,
                 frame_levels=6, keep_states=True)
    return rec


@pytest.mark.invariant
def test_density_matrix_invariants(driven):
    assert np.abs(driven.trace - 1).max() < 1e-8
    rng = np.random.default_rng(3)
    for k in rng.choice(len(driven.states), 5, replace=False):
        rho = driven.states[k]
        assert np.abs(rho - rho.conj().T).max() < 1e-10
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-7
    pops = np.array([driven.branch_pops[0], driven.branch_pops[1]])
    assert pops.min() >= -1e-6 and pops.max() <= 1 + 1e-6
    assert np.allclose(pops.sum(axis=0) + driven.leakage, 1.0, atol=1e-12)


def test_ring_down_decay(driven):
    t, n = driven.times, driven.mean_photon
    off = t >= 30.0
    base = driven.mean_photon[0]
    ratio = (n[off] - base) / (n[off][0] - base)
    expect = np.exp(-KAPPA * (t[off] - 30.0))
    assert np.abs(ratio - expect).max() < 0.02


def test_tolerance_convergence(small):
    basis, comp = small
    wd = default_drive_frequency(basis, ghz(7.925), CouplingSpec(mhz(227.5)))
    p = _pulse(mhz(60.0), wd, t1=30.0, ring=10.0)
    a = evolve(comp, p, KAPPA, initial=1, frame_levels=6, sample_times=[0.0, 40.0])
    b = evolve(comp, p, KAPPA, initial=1, frame_levels=6, sample_times=[0.0, 40.0], rtol=5e-9, atol=5e-11)
    assert abs(leakage_final(a) - leakage_final(b)) <= 0.05 * abs(leakage_final(a)) + 1e-9


def test_input_errors(small):
    _, comp = small
    with pytest.raises(ConfigurationError):
        evolve(comp, _pulse(0.0, ghz(7.9)), -1.0)
    with pytest.raises(ConfigurationError):
        evolve(comp, _pulse(0.0, ghz(7.9)), KAPPA, sample_times=[0.0, 2.0, 1.0])


def _fake(times, field):
    n = len(times)
    return TrajectoryRecord(
        times=np.asarray(times), mean_field=np.asarray(field, complex), mean_photon=np.zeros(n),
        branch_pops={0: np.ones(n), 1: np.zeros(n)}, leakage=np.zeros(n), per_level_pops={},
        trace=np.ones(n), frame_photon=np.zeros(n),
    )


@given(sep=st.floats(0.0, 10.0), phase=st.floats(0, 2 * np.pi), eta=st.floats(0.1, 1.0))
def test_snr_constant_separation(sep, phase, eta):
    t = np.linspace(0.0, 200.0, 101)
    g = _fake(t, np.full(101, 1.0 + 0.5j))
    e = _fake(t, g.mean_field + sep * np.exp(1j * phase))
    snr = snr_curve(g, e, KAPPA, eta)
    assert np.allclose(snr, np.sqrt(2 * KAPPA * eta) * sep * np.sqrt(t), rtol=1e-10, atol=1e-12)
    assert np.all(np.diff(snr) >= 0)


def test_snr_identical_and_mismatched():
    t = np.linspace(0.0, 10.0, 11)
    g = _fake(t, np.exp(1j * t))
    assert np.all(snr_curve(g, g, KAPPA) == 0)
    with pytest.raises(ConfigurationError):
        snr_curve(g, _fake(t + 1.0, np.zeros(11)), KAPPA)


def test_assignment_error_cases():
    assert assignment_error(0.0, 100.0) == pytest.approx(0.5 + 100.0 / 400e3, rel=1e-15)
    assert assignment_error(2 * np.sqrt(2), 50.0) == pytest.approx(0.5 * erfc(1.0) + 50.0 / 400e3, abs=1e-15)
    # large SNR leaves the relaxation floor 1 - 99.975 %
    assert assignment_error(60.0, 100.0) == pytest.approx(2.5e-4, abs=1e-12)
    with pytest.raises(ConfigurationError):
        assignment_error(1.0, 1.0, t1_relax=0.0)


@given(s=st.floats(0.0, 40.0), t=st.floats(0.0, 1000.0))
def test_assignment_error_range(s, t):
    e = assignment_error(s, t)
    assert 0 < e <= 0.5 + t / 400e3


def test_metrics_and_csv(driven, tmp_path):
    t = driven.times
    g = _fake(t, np.zeros(len(t)))
    m = readout_metrics(g, driven, KAPPA)
    t_best, e_best = m.best()
    assert e_best == m.assignment_error.min() and t_best in t
    m.write_csv(tmp_path / "m.csv")
    driven.write_csv(tmp_path / "t.csv")
    head = next(csv.reader(open(tmp_path / "t.csv")))
    assert head[:7] == ["t_ns", "re_a", "im_a", "nphot", "p0", "p1", "leak"]
    assert head[7:] == [f"pop_{k}" for k in sorted(driven.per_level_pops)]
    assert next(csv.reader(open(tmp_path / "m.csv"))) == ["tm_ns", "snr", "assignment_error"]
