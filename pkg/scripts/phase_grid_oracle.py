"""Print the phase-grid reference levels frozen into tests/test_hilbert.py."""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import phase_grid_levels  # noqa: E402

if __name__ == "__main__":
    tp = 2 * np.pi
    for ej, el in ((4.0, 0.75), (6.0, 0.3)):
        levels = phase_grid_levels(ej * tp, tp, el * tp, n_points=8001) / tp
        print((ej, el), [float(f"{x:.12g}") for x in levels])
