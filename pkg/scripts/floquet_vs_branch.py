"""Compare Floquet and quantum-branch critical photon numbers of the light fluxonium.

For each resonator frequency (GHz) the coupling is calibrated to chi = 2.5 MHz,
the branch n_crit uses 120 resonator levels and the Floquet scan drives at
omega_r up to n_bar = 100.  Each Floquet point takes a few minutes.
"""

import sys
import time

from fluxmist.branches import assign_branches, critical_photon_number
from fluxmist.dispersive import calibrate_coupling
from fluxmist.floquet import build_semiclassical, critical_photon_scan
from fluxmist.hilbert import CouplingSpec, FluxoniumParams, ResonatorParams, build_composite, diagonalize_fluxonium
from fluxmist.units import ghz, mhz, to_mhz

if __name__ == "__main__":
    freqs = [float(x) for x in sys.argv[1:]] or [7.1, 7.3, 7.4]
    basis = diagonalize_fluxonium(FluxoniumParams.from_ratios(4.0, 0.75, ghz(1.0)), 1000, 20)
    print("f_GHz,g_MHz,branch_ncrit,floquet_ncrit,seconds")
    for f in freqs:
        t0 = time.perf_counter()
        g = calibrate_coupling(basis, ghz(f), mhz(2.5)).g_star
        comp = build_composite(basis, ResonatorParams(ghz(f), n_levels=120), CouplingSpec(g))
        nq = critical_photon_number(assign_branches(comp)).n_crit
        _, fr = critical_photon_scan(build_semiclassical(basis, ghz(f), g), 100.0)
        print(f"{f},{to_mhz(g):.2f},{nq:.2f},{fr.n_crit:.2f},{time.perf_counter() - t0:.0f}", flush=True)
