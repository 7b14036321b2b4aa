"""Command-line front end.

Every command reads an optional JSON config (``{"schema": "fluxmist-config/1",
"command": ..., "params": {...}}``) in laboratory units: frequencies in GHz
or MHz meaning value/2pi, times in ns, capacitances in fF.  Global flags
override file values.  Summaries go to stdout, data to files in --out-dir.

Exit codes: 0 success, 1 numeric failure, 2 dispersive-validity rejection,
3 configuration or I/O error.  Failures print a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FluxmistError, ParameterDomainError, ValidityError
from .units import ghz, mhz, to_ghz, to_mhz

SCHEMA = "fluxmist-config/1"
EXIT_OK, EXIT_NUMERIC, EXIT_VALIDITY, EXIT_CONFIG = 0, 1, 2, 3


# -- configuration records --------------------------------------------------------


@dataclass
class QubitConfig:
    ej_over_ec: float = 4.0
    el_over_ec: float = 0.75
    e_c_ghz: float = 1.0
    phi_ext: float = 0.5
    n_fock: int = 1000
    n_keep: int = 20
    band_d: int | None = None


@dataclass
class BranchConfig:
    qubit: QubitConfig = field(default_factory=QubitConfig)
    omega_r_ghz: float = 9.37
    g_mhz: float | None = 289.0
    chi_target_mhz: float | None = None
    coupling: str = "capacitive"
    n_levels: int = 200
    margin: int = 20
    validity_threshold: float = 0.15


@dataclass
class CalibrateConfig:
    qubit: QubitConfig = field(default_factory=QubitConfig)
    omega_r_ghz: float = 7.925
    chi_target_mhz: float = 2.5
    coupling: str = "capacitive"
    signed: bool = False


@dataclass
class ResonancesConfig:
    qubit: QubitConfig = field(default_factory=QubitConfig)
    orders: list = field(default_factory=lambda: [2, 3])
    j_max: int = 20
    omega_min_ghz: float = 3.0
    omega_max_ghz: float = 10.0
    selection: str = "parity"


@dataclass
class ScanConfig:
    """Axes are [start, stop, num] triples; omega_r in GHz."""

    preset: str = "desk"
    ej_over_ec: list | None = None
    el_over_ec: list | None = None
    omega_r_ghz: list | None = None
    e_c_ghz: float = 1.0
    chi_target_mhz: float = 2.5
    coupling: str = "capacitive"
    n_levels: int | None = None
    band_d: int | None = None
    dry_run: bool = False
    limit: int | None = None


@dataclass
class ReadoutConfig:
    qubit: QubitConfig = field(default_factory=QubitConfig)
    omega_r_ghz: float = 7.925
    g_mhz: float | None = None
    chi_target_mhz: float | None = 2.5
    n_levels: int = 150
    kappa_mhz: float = 5.0
    eps1_mhz: float = 55.0
    eps2_mhz: float = 47.5
    t1_ns: float = 100.0
    t2_ns: float = 200.0
    ring_down_ns: float = 300.0
    omega_d_ghz: float | None = None
    frame_levels: int = 8
    initial_states: list = field(default_factory=lambda: [0, 1])
    eta: float = 0.5
    t1_relax_us: float = 200.0


@dataclass
class ArrayModelConfig:
    c_gj_ff: float = 0.5
    omega_r_ghz: float = 7.0
    c_p_ff: float | None = None
    c_c_ff: float | None = None
    e_cf_target_ghz: float = 1.0
    g_rf_mhz: float | None = None
    chi_target_mhz: float = 2.5
    qubit: QubitConfig = field(default_factory=QubitConfig)
    e_jj_ghz: float = 90.0
    n_junctions: int = 120
    c_j_ff: float = 25.0
    c_gp_ff: float = 10.0
    z_r_ohm: float = 50.0
    n_modes: int = 2


@dataclass
class ArrayScanConfig:
    omega_d_ghz: list = field(default_factory=lambda: [6.0, 8.0, 5])
    c_gj_ff: list = field(default_factory=lambda: [0.01, 0.5, 5])
    chi_target_mhz: float = 2.5
    qubit: QubitConfig = field(default_factory=QubitConfig)
    n_f: int = 10
    n_modes: int = 2
    mode_levels: int = 4
    n_bar_max: float = 50.0
    step: float = 0.5
    steps_per_period: int = 128


COMMANDS = {
    "branch": BranchConfig,
    "calibrate": CalibrateConfig,
    "resonances": ResonancesConfig,
    "scan": ScanConfig,
    "readout": ReadoutConfig,
    "array-model": ArrayModelConfig,
    "array-scan": ArrayScanConfig,
}


def _from_dict(cls, data):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{cls.__name__} expects an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigurationError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = names[key].default_factory() if names[key].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            value = _from_dict(type(default), value)
        kwargs[key] = value
    return cls(**kwargs)


def parse_config(document):
    """(command, params dataclass) from a config document (dict)."""
    unknown = set(document) - {"schema", "command", "params", "seed"}
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    if document.get("schema") != SCHEMA:
        raise ConfigurationError(f"config schema must be {SCHEMA!r}")
    command = document.get("command")
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    return command, _from_dict(COMMANDS[command], document.get("params", {})), int(document.get("seed", 0))


def emit_config(command, params, seed=0):
    return {"schema": SCHEMA, "command": command, "seed": seed, "params": asdict(params)}


# -- helpers -------------------------------------------------------------------------


def _basis(q):
    from .hilbert import FluxoniumParams, diagonalize_fluxonium, truncate_charge_bands

    params = FluxoniumParams.from_ratios(q.ej_over_ec, q.el_over_ec, ghz(q.e_c_ghz), q.phi_ext)
    basis = diagonalize_fluxonium(params, q.n_fock, q.n_keep)
    return basis if q.band_d is None else truncate_charge_bands(basis, q.band_d)


def _coupling_g(basis, omega_r, g_mhz, chi_target_mhz, kind):
    from .dispersive import calibrate_coupling

    if chi_target_mhz is not None:
        cal = calibrate_coupling(basis, omega_r, mhz(chi_target_mhz), kind=kind)
        if cal.failed:
            raise _Numeric("calibration found no coupling reaching the target dispersive shift")
        return cal.g_star, cal
    if g_mhz is None:
        raise ConfigurationError("give either g_mhz or chi_target_mhz")
    return mhz(g_mhz), None


class _Numeric(FluxmistError):
    pass


def _out(out_dir, name):
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


def _axis(spec, convert=float):
    if spec is None:
        return None
    if len(spec) != 3:
        raise ConfigurationError("axis specs are [start, stop, num]")
    start, stop, num = spec
    return tuple(convert(x) for x in np.linspace(start, stop, int(num)))


# -- commands ------------------------------------------------------------------------


def cmd_branch(cfg, args):
    from .branches import assign_branches, critical_photon_number
    from .dispersive import dispersive_validity
    from .hilbert import CouplingSpec, ResonatorParams, build_composite

    basis = _basis(cfg.qubit)
    omega_r = ghz(cfg.omega_r_ghz)
    g, _ = _coupling_g(basis, omega_r, cfg.g_mhz, cfg.chi_target_mhz, cfg.coupling)
    valid, worst = dispersive_validity(basis, g, omega_r, cfg.validity_threshold, kind=cfg.coupling)
    if not valid:
        raise ValidityError(f"dispersive ratio {worst:.3f} exceeds {cfg.validity_threshold}")
    comp = build_composite(basis, ResonatorParams(omega_r, n_levels=cfg.n_levels), CouplingSpec(g, cfg.coupling))
    bs = assign_branches(comp, margin=cfg.margin)
    res = critical_photon_number(bs)
    bs.write_csv(_out(args.out_dir, "branches.csv"))
    print(f"ncrit={res.n_crit:.6g} ncrit_g={res.n_crit_ground:.6g} ncrit_e={res.n_crit_excited:.6g} "
          f"saturated={str(res.saturated).lower()} g_MHz={to_mhz(g):.6g}")
    return EXIT_OK


def cmd_calibrate(cfg, args):
    from .dispersive import calibrate_coupling

    basis = _basis(cfg.qubit)
    cal = calibrate_coupling(basis, ghz(cfg.omega_r_ghz), mhz(cfg.chi_target_mhz), kind=cfg.coupling,
                             signed=cfg.signed, workers=args.workers)
    if cal.failed:
        raise _Numeric("no bracketed root on the coupling grid")
    print(f"g_MHz={to_mhz(cal.g_star):.8g} chi_MHz={to_mhz(cal.chi_achieved):.8g} "
          f"within_tolerance={str(cal.within_tolerance).lower()}")
    with open(_out(args.out_dir, "calibration.json"), "w") as fh:
        json.dump({"g_MHz": to_mhz(cal.g_star), "chi_MHz": to_mhz(cal.chi_achieved),
                   "within_tolerance": cal.within_tolerance}, fh, indent=2)
    return EXIT_OK


def cmd_resonances(cfg, args):
    import csv

    from .scan import multiphoton_resonances

    basis = _basis(cfg.qubit)
    res = multiphoton_resonances(basis, tuple(cfg.orders), cfg.j_max,
                                 (ghz(cfg.omega_min_ghz), ghz(cfg.omega_max_ghz)), cfg.selection)
    with open(_out(args.out_dir, "resonances.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["order", "i", "j", "omega_r_GHz"])
        for r in res:
            w.writerow([r.order, r.transition[0], r.transition[1], format(to_ghz(r.omega_r), ".12g")])
    print(f"resonances={len(res)}")
    return EXIT_OK


def _scan_grid(cfg):
    from .scan import DimSpec, preset_grid

    overrides = {"e_c": ghz(cfg.e_c_ghz), "chi_target": mhz(cfg.chi_target_mhz), "coupling_kind": cfg.coupling}
    for key, axis in (("ej_over_ec", _axis(cfg.ej_over_ec)), ("el_over_ec", _axis(cfg.el_over_ec)),
                      ("omega_r", _axis(cfg.omega_r_ghz, ghz))):
        if axis is not None:
            overrides[key] = axis
    grid = preset_grid(cfg.preset, **overrides)
    dims = grid.dims
    if cfg.n_levels is not None or cfg.band_d is not None:
        dims = dataclasses.replace(
            dims,
            n_levels=dims.n_levels if cfg.n_levels is None else cfg.n_levels,
            band_d=cfg.band_d,
        )
        grid = dataclasses.replace(grid, dims=dims)
    return grid


def cmd_scan(cfg, args):
    from .scan import aggregate, grid_to_dict, run_scan

    grid = _scan_grid(cfg)
    if cfg.dry_run:
        print(f"points={grid.size}")
        return EXIT_OK
    records_path = _out(args.out_dir, "records.csv")
    with open(_out(args.out_dir, "grid.json"), "w") as fh:
        json.dump(grid_to_dict(grid), fh, indent=2, default=str)
    records = run_scan(grid, workers=args.workers, records_path=records_path,
                       cache_dir=_out(args.out_dir, "cache"), resume=args.resume, limit=cfg.limit)
    amap = aggregate(records)
    amap.write_csv(_out(args.out_dir, "aggregate.csv"))
    valid = sum(r.valid for r in records)
    print(f"points={len(records)}/{grid.size} valid={valid}")
    return EXIT_OK


def cmd_readout(cfg, args):
    from .branches import assign_branches
    from .dispersive import dispersive_validity
    from .dynamics import DrivePulse, default_drive_frequency, evolve, readout_metrics
    from .hilbert import CouplingSpec, ResonatorParams, build_composite

    basis = _basis(cfg.qubit)
    omega_r = ghz(cfg.omega_r_ghz)
    g, _ = _coupling_g(basis, omega_r, cfg.g_mhz, cfg.chi_target_mhz, "capacitive")
    valid, worst = dispersive_validity(basis, g, omega_r)
    if not valid:
        raise ValidityError(f"dispersive ratio {worst:.3f} exceeds the validity threshold")
    coupling = CouplingSpec(g)
    comp = build_composite(basis, ResonatorParams(omega_r, n_levels=cfg.n_levels), coupling)
    bs = assign_branches(comp)
    omega_d = default_drive_frequency(basis, omega_r, coupling) if cfg.omega_d_ghz is None else ghz(cfg.omega_d_ghz)
    pulse = DrivePulse(mhz(cfg.eps1_mhz), mhz(cfg.eps2_mhz), omega_d, cfg.t1_ns, cfg.t2_ns, cfg.ring_down_ns)
    kappa = mhz(cfg.kappa_mhz)
    trajs = {}
    for i in cfg.initial_states:
        trajs[i] = evolve(comp, pulse, kappa, initial=i, frame_levels=cfg.frame_levels, branch_set=bs)
        trajs[i].write_csv(_out(args.out_dir, f"trajectory_{i}.csv"))
        print(f"initial={i} final_leakage={trajs[i].leakage[-1]:.6g} peak_photons={trajs[i].mean_photon.max():.6g}")
    if 0 in trajs and 1 in trajs:
        m = readout_metrics(trajs[0], trajs[1], kappa, cfg.eta, cfg.t1_relax_us * 1e3)
        m.write_csv(_out(args.out_dir, "metrics.csv"))
        t_best, e_best = m.best()
        print(f"best_tm_ns={t_best:.6g} min_assignment_error={e_best:.6g}")
    return EXIT_OK


def _array_model(cfg):
    from .circuit import CircuitParams, derive_array_model, solve_capacitances

    base = CircuitParams(
        c_gj=cfg.c_gj_ff, e_jj=ghz(cfg.e_jj_ghz), n_junctions=cfg.n_junctions, c_j=cfg.c_j_ff,
        c_gp=cfg.c_gp_ff, z_r=cfg.z_r_ohm, omega_r=ghz(cfg.omega_r_ghz),
    )
    if cfg.c_p_ff is not None and cfg.c_c_ff is not None:
        params = dataclasses.replace(base, c_p=cfg.c_p_ff, c_c=cfg.c_c_ff)
    else:
        if cfg.g_rf_mhz is not None:
            g = mhz(cfg.g_rf_mhz)
        else:
            basis = _basis(cfg.qubit)
            g, _ = _coupling_g(basis, ghz(cfg.omega_r_ghz), None, cfg.chi_target_mhz, "capacitive")
        params = solve_capacitances(base, g, e_cf_target=ghz(cfg.e_cf_target_ghz))
    return derive_array_model(params, n_modes_kept=cfg.n_modes)


def cmd_array_model(cfg, args):
    model = _array_model(cfg)
    model.write_json(_out(args.out_dir, "array_model.json"))
    freqs = " ".join(f"{x:.6g}" for x in to_ghz(model.mode_freqs))
    print(f"e_cf_GHz={to_ghz(model.e_cf):.6g} j_rf_MHz={to_mhz(model.j_rf):.6g} mode_freqs_GHz={freqs} "
          f"c_p_fF={model.params.c_p:.6g} c_c_fF={model.params.c_c:.6g}")
    return EXIT_OK


def cmd_array_scan(cfg, args):
    from .floquet import ArrayScanGrid, run_array_scan

    q = cfg.qubit
    grid = ArrayScanGrid(
        omega_d=_axis(cfg.omega_d_ghz, ghz), c_gj=_axis(cfg.c_gj_ff), ej_over_ec=q.ej_over_ec,
        el_over_ec=q.el_over_ec, e_c=ghz(q.e_c_ghz), chi_target=mhz(cfg.chi_target_mhz), n_f=cfg.n_f,
        n_modes=cfg.n_modes, mode_levels=cfg.mode_levels, n_bar_max=cfg.n_bar_max, step=cfg.step,
        steps_per_period=cfg.steps_per_period,
    )
    rows = run_array_scan(grid, _out(args.out_dir, "array_records.csv"), resume=args.resume)
    failed = sum(1 for r in rows if r["error"])
    print(f"points={len(rows)} failed={failed}")
    return EXIT_OK


HANDLERS = {
    "branch": cmd_branch,
    "calibrate": cmd_calibrate,
    "resonances": cmd_resonances,
    "scan": cmd_scan,
    "readout": cmd_readout,
    "array-model": cmd_array_model,
    "array-scan": cmd_array_scan,
}


def build_parser():
    p = argparse.ArgumentParser(prog="fluxmist", description="Measurement-induced transitions in fluxonium readout.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (schema %s)" % SCHEMA)
    p.add_argument("--workers", type=int, default=1, help="worker processes for scans")
    p.add_argument("--preset", choices=["desk", "paper"], help="scan grid preset (scan only)")
    p.add_argument("--out-dir", default=".", help="directory for CSV/JSON outputs")
    p.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True,
                   help="resume from existing checkpoints (default on)")
    p.add_argument("--dry-run", action="store_true", help="scan only: print the point count and exit")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    return p


def _fail(code, exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        seed = 0
        if args.config:
            with open(args.config) as fh:
                command, cfg, seed = parse_config(json.load(fh))
            if command != args.command:
                raise ConfigurationError(f"config is for {command!r}, not {args.command!r}")
        else:
            cfg = COMMANDS[args.command]()
        if args.preset is not None:
            if not isinstance(cfg, ScanConfig):
                raise ConfigurationError("--preset applies to the scan command only")
            cfg.preset = args.preset
        if args.dry_run:
            if not isinstance(cfg, ScanConfig):
                raise ConfigurationError("--dry-run applies to the scan command only")
            cfg.dry_run = True
        if args.print_config:
            print(json.dumps(emit_config(args.command, cfg, seed), indent=2))
            return EXIT_OK
        np.random.seed(seed)
        return HANDLERS[args.command](cfg, args)
    except ValidityError as exc:
        return _fail(EXIT_VALIDITY, exc)
    except (ConfigurationError, ParameterDomainError, OSError, TypeError, json.JSONDecodeError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (FluxmistError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
