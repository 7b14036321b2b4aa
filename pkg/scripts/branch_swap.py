"""Branch analysis of the light fluxonium at 9.37 GHz / 289 MHz.

Writes branches.csv and prints n_crit together with the 1 <-> 12 swap point.
"""

import argparse

import numpy as np

from fluxmist.branches import assign_branches, critical_photon_number
from fluxmist.hilbert import CouplingSpec, FluxoniumParams, ResonatorParams, build_composite, diagonalize_fluxonium
from fluxmist.units import ghz, mhz

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=200)
    ap.add_argument("--out", default="branches.csv")
    args = ap.parse_args()

    basis = diagonalize_fluxonium(FluxoniumParams.from_ratios(4.0, 0.75, ghz(1.0)), 1000, 20)
    comp = build_composite(basis, ResonatorParams(ghz(9.37), n_levels=args.levels), CouplingSpec(mhz(289.0)))
    bs = assign_branches(comp)
    bs.write_csv(args.out)
    r = critical_photon_number(bs)
    n1, q1, _ = bs.trajectory(1)
    k = int(np.argmax(q1 > 6))
    print(f"n_crit={r.n_crit:.2f} (ground {r.n_crit_ground:.2f}, excited {r.n_crit_excited:.2f})")
    print(f"branch 1 reaches <N_f>={q1[k]:.2f} at <N_r>={n1[k]:.2f}")
