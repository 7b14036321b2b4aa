import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluxmist.circuit import (
    CircuitParams,
    closed_form_inverse,
    derive_array_model,
    exact_inverse_capacitance,
    max_offdiagonal_ratio,
    resonator_energies,
    solve_capacitances,
    standing_waves,
)
from fluxmist.errors import InfeasibleError, ParameterDomainError
from fluxmist.units import charging_energy_from_ff, ghz, mhz, to_ghz

G_STAR_7GHZ = mhz(181.75)  # chi = 2.5 MHz calibration of the light qubit at 7 GHz


def test_params_domain():
    with pytest.raises(ParameterDomainError):
        CircuitParams(c_gj=0.0)
    with pytest.raises(ParameterDomainError):
        CircuitParams(c_gj=0.1, n_junctions=2)
    with pytest.raises(ParameterDomainError):
        derive_array_model(CircuitParams(c_gj=0.1, n_junctions=8), n_modes_kept=8)


@given(n=st.integers(3, 200))
def test_standing_waves_orthonormal(n):
    w = standing_waves(n)
    assert w.shape == (n - 1, n)
    assert np.abs(w @ w.T - np.eye(n - 1)).max() < 1e-12
    assert np.abs(w.sum(axis=1)).max() < 1e-12


def test_resonator_energies():
    e_c, e_l = resonator_energies(ghz(7.0), 50.0)
    assert np.sqrt(8 * e_c * e_l) == pytest.approx(ghz(7.0), rel=1e-12)
    # Z = 50 ohm is a low-impedance mode: zero-point charge well above 1
    assert (e_l / (32 * e_c)) ** 0.25 == pytest.approx(3.20, abs=0.01)


@pytest.mark.parametrize("n", [8, 12])
@pytest.mark.parametrize("c_gj", [0.01, 0.1, 0.5])
def test_closed_form_against_exact_inverse(n, c_gj):
    p = CircuitParams(c_gj=c_gj, n_junctions=n)
    ex, cf = exact_inverse_capacitance(p), closed_form_inverse(p)
    scale = np.sqrt(np.outer(np.diag(ex), np.diag(ex)))
    err = np.abs(cf - ex) / scale
    # mode-mode cross terms are reported but not part of the first-order check
    block = err[2:, 2:]
    block[~np.eye(n - 1, dtype=bool)] = 0.0
    r = max_offdiagonal_ratio(p)
    assert err.max() <= 10 * r**2


@given(c=st.floats(0.01, 2.0), n=st.integers(3, 16))
def test_exact_inverse_symmetric_positive(c, n):
    ex = exact_inverse_capacitance(CircuitParams(c_gj=c, n_junctions=n))
    assert np.allclose(ex, ex.T, rtol=0, atol=1e-12 * np.abs(ex).max())
    assert np.linalg.eigvalsh(ex).min() > 0


def test_mode_frequencies_large_ground_capacitance():
    m = derive_array_model(CircuitParams(c_gj=0.5))
    assert to_ghz(m.mode_freqs[0]) == pytest.approx(6.3, rel=0.05)
    assert to_ghz(m.mode_freqs[1]) == pytest.approx(8.2, rel=0.05)
    assert np.allclose(m.mode_freqs, np.sqrt(8 * m.mode_charging * m.params.e_jj))


def test_mode_frequencies_increasing():
    m = derive_array_model(CircuitParams(c_gj=0.2), n_modes_kept=60)
    assert np.all(m.mode_freqs > 0)
    assert np.all(np.diff(m.mode_freqs) > 0)


def test_first_mode_monotone_in_ground_capacitance():
    freqs = [derive_array_model(CircuitParams(c_gj=c)).mode_freqs[0] for c in np.linspace(0.01, 0.5, 25)]
    assert np.all(np.diff(freqs) < 0)


def test_vanishing_ground_capacitance():
    small = derive_array_model(CircuitParams(c_gj=1e-6))
    ref = derive_array_model(CircuitParams(c_gj=0.5))
    assert np.abs(small.g_fmu).max() < 1e-3 * np.abs(ref.g_fmu).max()
    assert np.abs(small.g_rmu).max() < 1e-3 * np.abs(ref.g_rmu).max()


def test_parity_structure():
    p = solve_capacitances(CircuitParams(c_gj=0.5), G_STAR_7GHZ)
    m = derive_array_model(p, n_modes_kept=4)
    # the resonator only sees odd modes; the qubit couples more strongly to the second
    assert np.all(m.g_rmu[1::2] == 0) and np.all(m.g_rmu[0::2] != 0)
    assert abs(m.g_fmu[1]) > abs(m.g_fmu[0])


def test_large_coupling_capacitance_keeps_odd_modes():
    m = derive_array_model(CircuitParams(c_gj=0.5, c_c=8000.0), n_modes_kept=4)
    assert to_ghz(m.e_t) < 0.01
    assert np.all(np.abs(m.j_fmu[0::2]) > mhz(100))


@given(logc=st.lists(st.floats(-10, 10), min_size=5, max_size=5), n=st.integers(3, 300))
def test_charging_energies_positive(logc, n):
    # the closed forms stay positive for any positive capacitances, so the validity guard never fires
    c = np.exp(logc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = derive_array_model(CircuitParams(c_gj=c[0], c_p=c[1], c_c=c[2], c_j=c[3], c_gp=c[4], n_junctions=n), 1)
    assert m.e_cf > 0 and np.all(m.mode_charging > 0)


def test_low_josephson_ratio_warns():
    with pytest.warns(UserWarning, match="below 20"):
        derive_array_model(CircuitParams(c_gj=0.1, e_jj=ghz(1.0)))


@pytest.mark.parametrize("c_gj", [0.01, 0.1, 0.5])
def test_solve_round_trip(c_gj):
    p = solve_capacitances(CircuitParams(c_gj=c_gj), G_STAR_7GHZ)
    m = derive_array_model(p)
    tol = ghz(1e-6)  # 1 kHz
    assert abs(m.e_cf - ghz(1.0)) < tol
    assert abs(abs(m.g_rf) - G_STAR_7GHZ) < tol


def test_solved_direct_coupling():
    m = derive_array_model(solve_capacitances(CircuitParams(c_gj=0.5), G_STAR_7GHZ))
    assert abs(to_ghz(m.j_rf)) == pytest.approx(0.057, rel=0.05)


def test_solve_infeasible():
    with pytest.raises(InfeasibleError, match="corners"):
        solve_capacitances(CircuitParams(c_gj=0.5), ghz(50.0))


def test_charging_energy_units():
    assert to_ghz(charging_energy_from_ff(19.37)) == pytest.approx(1.0, rel=1e-3)


def test_json_dump(tmp_path):
    m = derive_array_model(CircuitParams(c_gj=0.5))
    m.write_json(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["mode_freqs_GHz"] == pytest.approx(to_ghz(m.mode_freqs).tolist())
    assert d["params"]["c_gj"] == 0.5 and d["params"]["omega_r_GHz"] == pytest.approx(7.0)
    assert len(d["j_munu_GHz"]) == 2
