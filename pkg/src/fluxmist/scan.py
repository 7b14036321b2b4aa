"""Parameter scans over (E_J/E_C, E_L/E_C, omega_r).

Each grid point is calibrated to the target dispersive shift, filtered for
dispersive validity and analysed with the branch method.  Work is grouped per
qubit so each fluxonium is diagonalized once; records are appended to a CSV
and checkpointed as newline-delimited JSON so interrupted scans resume where
they stopped.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .branches import DEFAULT_MARGIN, assign_branches, critical_photon_number
from .dispersive import (
    CALIBRATION_LEVELS,
    CHI_TOLERANCE,
    VALIDITY_THRESHOLD,
    calibrate_coupling,
    dispersive_validity,
)
from .errors import ConfigurationError, FluxmistError
from .hilbert import (
    CouplingKind,
    CouplingSpec,
    EigenbasisCache,
    FluxoniumParams,
    ResonatorParams,
    build_composite,
    truncate_charge_bands,
)
from .units import ghz, mhz, to_ghz, to_mhz

RECORD_HEADER = [
    "ej_over_ec", "el_over_ec", "omega_r_GHz", "g_GHz", "chi_MHz", "valid",
    "rejection", "ncrit", "ncrit_g", "ncrit_e", "saturated",
]
AGGREGATE_HEADER = [
    "ej_over_ec", "el_over_ec", "mean_ncrit", "windowed_max_mean", "mean_g_GHz",
    "valid_count", "total_count",
]
DEFAULT_HALF_WIDTH = mhz(350.0)


class Rejection(str, enum.Enum):
    NONE = "None"
    CALIBRATION = "CalibrationTolerance"
    DISPERSIVE = "DispersiveRatio"
    NUMERIC = "NumericFailure"


def _axis(start, stop, num):
    return tuple(np.linspace(start, stop, num).tolist())


@dataclass(frozen=True)
class DimSpec:
    n_fock: int = 1000
    n_keep: int = 20
    n_levels: int = 200
    margin: int = DEFAULT_MARGIN
    calibration_levels: int = CALIBRATION_LEVELS
    band_d: int | None = None


@dataclass(frozen=True)
class ScanGrid:
    """Scan axes; omega_r and energies in rad/ns, ratios dimensionless."""

    ej_over_ec: tuple = _axis(1.0, 10.0, 100)
    el_over_ec: tuple = _axis(0.05, 3.0, 100)
    omega_r: tuple = _axis(ghz(3.0), ghz(10.0), 200)
    e_c: float = ghz(1.0)
    chi_target: float = mhz(2.5)
    coupling_kind: CouplingKind = CouplingKind.CAPACITIVE
    dims: DimSpec = DimSpec()
    validity_threshold: float = VALIDITY_THRESHOLD
    chi_tolerance: float = CHI_TOLERANCE

    def __post_init__(self):
        for name in ("ej_over_ec", "el_over_ec", "omega_r"):
            values = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            if len(values) < 1:
                raise ConfigurationError(f"{name} needs at least one point")
            if np.any(np.diff(values) <= 0):
                raise ConfigurationError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "coupling_kind", CouplingKind(self.coupling_kind))

    @property
    def shape(self):
        return len(self.ej_over_ec), len(self.el_over_ec), len(self.omega_r)

    @property
    def size(self):
        a, b, c = self.shape
        return a * b * c

    def point(self, index):
        i, j, k = np.unravel_index(index, self.shape)
        return self.ej_over_ec[i], self.el_over_ec[j], self.omega_r[k]

    def locate(self, ej, el, omega_r_ghz):
        """Flat index of the grid point nearest to the given values."""
        i = int(np.argmin(np.abs(np.array(self.ej_over_ec) - ej)))
        j = int(np.argmin(np.abs(np.array(self.el_over_ec) - el)))
        k = int(np.argmin(np.abs(to_ghz(np.array(self.omega_r)) - omega_r_ghz)))
        return int(np.ravel_multi_index((i, j, k), self.shape))


def preset_grid(name, **overrides):
    """Named grids: ``desk`` (10 x 10 x 50, reduced resonator space) and ``paper``."""
    if name == "desk":
        base = dict(
            ej_over_ec=_axis(1.0, 10.0, 10),
            el_over_ec=_axis(0.05, 3.0, 10),
            omega_r=_axis(ghz(3.0), ghz(10.0), 50),
            dims=DimSpec(n_levels=80),
        )
    elif name == "paper":
        base = {}
    else:
        raise ConfigurationError(f"unknown preset {name!r}")
    base.update(overrides)
    return ScanGrid(**base)


@dataclass(frozen=True)
class ScanRecord:
    index: int
    ej_over_ec: float
    el_over_ec: float
    omega_r: float
    g_star: float
    chi_achieved: float
    valid: bool
    rejection_reason: Rejection
    n_crit: float | None = None
    n_crit_ground: float | None = None
    n_crit_excited: float | None = None
    saturated: bool | None = None

    def row(self):
        return [
            _fmt(self.ej_over_ec), _fmt(self.el_over_ec), _fmt(to_ghz(self.omega_r)),
            _fmt(to_ghz(self.g_star)), _fmt(to_mhz(self.chi_achieved)),
            str(self.valid).lower(), self.rejection_reason.value,
            _fmt(self.n_crit), _fmt(self.n_crit_ground), _fmt(self.n_crit_excited),
            "" if self.saturated is None else str(self.saturated).lower(),
        ]


def _fmt(x):
    if x is None:
        return ""
    return format(float(x), ".12g")


def _parse(text):
    return None if text == "" else float(text)


def record_from_row(row, grid):
    values = dict(zip(RECORD_HEADER, row))
    ej, el, w = float(values["ej_over_ec"]), float(values["el_over_ec"]), float(values["omega_r_GHz"])
    index = grid.locate(ej, el, w)
    ej, el, omega_r = grid.point(index)
    sat = values["saturated"]
    return ScanRecord(
        index=index,
        ej_over_ec=ej,
        el_over_ec=el,
        omega_r=omega_r,
        g_star=ghz(float(values["g_GHz"])),
        chi_achieved=mhz(float(values["chi_MHz"])),
        valid=values["valid"] == "true",
        rejection_reason=Rejection(values["rejection"]),
        n_crit=_parse(values["ncrit"]),
        n_crit_ground=_parse(values["ncrit_g"]),
        n_crit_excited=_parse(values["ncrit_e"]),
        saturated=None if sat == "" else sat == "true",
    )


# -- per-point pipeline ------------------------------------------------------

_WORKER_CACHE = {}


def _cache(directory):
    key = None if directory is None else str(directory)
    if key not in _WORKER_CACHE:
        _WORKER_CACHE[key] = EigenbasisCache(directory)
    return _WORKER_CACHE[key]


def qubit_basis(grid, ej, el, cache_dir=None):
    params = FluxoniumParams.from_ratios(ej, el, grid.e_c)
    basis = _cache(cache_dir).get(params, grid.dims.n_fock, grid.dims.n_keep)
    if grid.dims.band_d is not None:
        basis = truncate_charge_bands(basis, grid.dims.band_d)
    return basis


def analyse_point(grid, basis, index):
    """Calibrate, filter and branch-analyse one grid point."""
    ej, el, omega_r = grid.point(index)
    base = dict(index=index, ej_over_ec=ej, el_over_ec=el, omega_r=omega_r)
    kind = grid.coupling_kind
    dims = grid.dims
    try:
        cal = calibrate_coupling(
            basis, omega_r, grid.chi_target, kind=kind, n_levels=dims.calibration_levels,
            tolerance=grid.chi_tolerance,
        )
        if cal.failed or not cal.within_tolerance:
            return ScanRecord(g_star=cal.g_star, chi_achieved=cal.chi_achieved, valid=False,
                              rejection_reason=Rejection.CALIBRATION, **base)
        base.update(g_star=cal.g_star, chi_achieved=cal.chi_achieved)
        valid, _ = dispersive_validity(basis, cal.g_star, omega_r, grid.validity_threshold, kind=kind)
        if not valid:
            return ScanRecord(valid=False, rejection_reason=Rejection.DISPERSIVE, **base)
        res = ResonatorParams(omega_r=omega_r, n_levels=dims.n_levels)
        composite = build_composite(basis, res, CouplingSpec(cal.g_star, kind))
        result = critical_photon_number(assign_branches(composite, margin=dims.margin))
    except (FluxmistError, np.linalg.LinAlgError, ArithmeticError):
        base.setdefault("g_star", np.nan)
        base.setdefault("chi_achieved", np.nan)
        return ScanRecord(valid=False, rejection_reason=Rejection.NUMERIC, **base)
    return ScanRecord(
        valid=True, rejection_reason=Rejection.NONE, n_crit=result.n_crit,
        n_crit_ground=result.n_crit_ground, n_crit_excited=result.n_crit_excited,
        saturated=result.saturated, **base,
    )


def _scan_group(task):
    grid, indices, cache_dir = task
    ej, el, _ = grid.point(indices[0])
    try:
        basis = qubit_basis(grid, ej, el, cache_dir)
    except FluxmistError:
        out = []
        for idx in indices:
            e, l, w = grid.point(idx)
            out.append(ScanRecord(idx, e, l, w, np.nan, np.nan, False, Rejection.NUMERIC))
        return out
    return [analyse_point(grid, basis, idx) for idx in indices]


# -- checkpointed driver -------------------------------------------------------


def _load_checkpoint(records_path, checkpoint_path, grid):
    """Completed records and the CSV byte offset they end at."""
    done, offset = set(), None
    if checkpoint_path.exists():
        with open(checkpoint_path) as fh:
            for line in fh:
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn final line from an interrupted write
                done.update(entry["indices"])
                offset = entry["offset"]
    if offset is None or not records_path.exists():
        return {}, None
    with open(records_path, "r+b") as fh:
        fh.truncate(offset)
        fh.seek(0)
        text = fh.read().decode()
    rows = list(csv.reader(io.StringIO(text)))
    records = {}
    for row in rows[1:]:
        rec = record_from_row(row, grid)
        records[rec.index] = rec
    if set(records) != done:
        raise ConfigurationError("checkpoint and records file disagree; delete both to restart")
    return records, offset


def write_records(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for rec in sorted(records, key=lambda r: r.index):
            w.writerow(rec.row())


def read_records(path, grid):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [record_from_row(r, grid) for r in rows[1:]]


def run_scan(grid, workers=1, checkpoint_path=None, records_path=None, cache_dir=None,
             resume=True, limit=None):
    """Run (or resume) a scan and return all records sorted by grid index.

    ``limit`` stops after that many newly computed points, leaving a valid
    checkpoint behind (used to emulate interruption).
    """
    records = {}
    if records_path is not None:
        records_path = Path(records_path)
        checkpoint_path = Path(checkpoint_path or records_path.with_suffix(".ckpt.ndjson"))
        if resume:
            records, offset = _load_checkpoint(records_path, checkpoint_path, grid)
        if not records:
            with open(records_path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(RECORD_HEADER)
            with open(checkpoint_path, "w"):
                pass

    n_ej, n_el, n_w = grid.shape
    tasks = []
    budget = np.inf if limit is None else limit
    for i in range(n_ej):
        for j in range(n_el):
            start = (i * n_el + j) * n_w
            pending = [k for k in range(start, start + n_w) if k not in records]
            if pending and budget > 0:
                pending = pending[: int(min(budget, len(pending)))]
                budget -= len(pending)
                tasks.append((grid, pending, cache_dir))

    def consume(batches):
        for batch in batches:
            for rec in batch:
                records[rec.index] = rec
            if records_path is not None:
                _append(records_path, checkpoint_path, batch)

    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            consume(pool.map(_scan_group, tasks))
    else:
        consume(map(_scan_group, tasks))

    ordered = [records[k] for k in sorted(records)]
    if records_path is not None and len(records) == grid.size:
        write_records(ordered, records_path)
    return ordered


def _append(records_path, checkpoint_path, batch):
    with open(records_path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for rec in batch:
            w.writerow(rec.row())
        fh.flush()
        os.fsync(fh.fileno())
        offset = fh.tell()
    with open(checkpoint_path, "a") as fh:
        fh.write(json.dumps({"indices": [r.index for r in batch], "offset": offset}) + "\n")
        fh.flush()


# -- aggregation -----------------------------------------------------------------


@dataclass(frozen=True)
class AggregateCell:
    mean_ncrit: float
    windowed_max_mean: float
    mean_g: float
    valid_count: int
    total_count: int

    @property
    def missing(self):
        return self.valid_count == 0


@dataclass
class AggregateMap:
    cells: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGGREGATE_HEADER)
            for (ej, el), c in sorted(self.cells.items()):
                w.writerow([
                    _fmt(ej), _fmt(el),
                    "" if c.missing else _fmt(c.mean_ncrit),
                    "" if c.missing else _fmt(c.windowed_max_mean),
                    "" if c.missing else _fmt(to_ghz(c.mean_g)),
                    c.valid_count, c.total_count,
                ])

    def region_mean(self, predicate):
        """Mean of the per-cell n_crit averages over non-missing cells with predicate(ej, el)."""
        values = [c.mean_ncrit for (ej, el), c in self.cells.items()
                  if not c.missing and predicate(ej, el)]
        return float(np.mean(values)) if values else float("nan")


def windowed_max_mean(records, half_width=DEFAULT_HALF_WIDTH):
    """Maximum over grid-aligned centers of the mean n_crit inside |omega - center| <= half_width.

    Invalid records are excluded from the windows but still define centers.
    """
    centers = sorted({r.omega_r for r in records})
    valid = [(r.omega_r, r.n_crit) for r in records if r.valid]
    if not valid:
        return float("nan")
    w = np.array([v[0] for v in valid])
    n = np.array([v[1] for v in valid], dtype=float)
    slack = 1e-9 * max(abs(half_width), 1.0)
    best = -np.inf
    for c in centers:
        inside = np.abs(w - c) <= half_width + slack
        if inside.any():
            best = max(best, float(n[inside].mean()))
    return best


def aggregate(records, half_width=DEFAULT_HALF_WIDTH):
    groups = {}
    for r in records:
        groups.setdefault((r.ej_over_ec, r.el_over_ec), []).append(r)
    cells = {}
    for key, recs in groups.items():
        valid = [r for r in recs if r.valid]
        if valid:
            cell = AggregateCell(
                mean_ncrit=float(np.mean([r.n_crit for r in valid])),
                windowed_max_mean=windowed_max_mean(recs, half_width),
                mean_g=float(np.mean([r.g_star for r in valid])),
                valid_count=len(valid),
                total_count=len(recs),
            )
        else:
            cell = AggregateCell(np.nan, np.nan, np.nan, 0, len(recs))
        cells[key] = cell
    return AggregateMap(cells)


# -- multi-photon resonances ---------------------------------------------------


@dataclass(frozen=True)
class Resonance:
    order: int
    transition: tuple
    omega_r: float


def multiphoton_resonances(basis, orders=(2, 3), j_max=20, omega_range=(ghz(3.0), ghz(10.0)),
                           selection="element", element_floor=1e-8):
    """Resonator frequencies omega_ij / n of n-photon resonances from i in {0, 1}.

    ``selection="element"`` keeps transitions with |<i|n|j>| above ``element_floor``;
    ``selection="parity"`` keeps those whose parities satisfy p_i p_j = (-1)^n,
    the exact rule for an n-photon process driven through the charge operator.
    """
    if selection not in ("element", "parity"):
        raise ConfigurationError(f"unknown selection rule {selection!r}")
    if selection == "parity" and basis.parity is None:
        raise ConfigurationError("parity selection needs a parity-symmetric fluxonium")
    lo, hi = omega_range
    top = min(j_max, basis.n_keep - 1)
    out = []
    for i in (0, 1):
        for j in range(i + 1, top + 1):
            w = basis.transition(i, j)
            for n in sorted(orders):
                if selection == "element":
                    allowed = abs(basis.charge_elements[i, j]) > element_floor
                else:
                    allowed = basis.parity[i] * basis.parity[j] == (-1) ** n
                if allowed and lo <= w / n <= hi:
                    out.append(Resonance(n, (i, j), w / n))
    out.sort(key=lambda r: (r.omega_r, r.order, r.transition))
    return out


def grid_to_dict(grid):
    d = asdict(grid)
    d["coupling_kind"] = grid.coupling_kind.value
    return d
