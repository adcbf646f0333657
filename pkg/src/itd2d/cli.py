"""Command-line pipeline: simulate, twin, identify, calibrate, estimate, synth-cycle.

Exit codes: 0 success, 2 input or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, check_files, load_config
from .drivecycle import cycle_heat, read_cycle_csv, synth_hev_cycle, write_cycle_csv
from .errors import ConfigError, InputError, NumericalError
from .estimation import MODES, run_estimator, trace_from_states, write_trace_csv
from .fdm import solve_transient, write_field_csv
from .impedance import load_calibration, save_calibration
from .model import (
    assemble_model, discretize, grid_coordinates, output_map_for_points, reconstruct_field, simulate,
)
from .sysid import IdProblem, calibrate_pipeline, identify, save_report
from .twin import SENSORS, TwinSettings, run_twin

DEFAULT_T0_ESTIMATE = 25.0


def _fmt(v) -> str:
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _write_model_field(path: Path, model, state, grid) -> None:
    r, z = grid_coordinates(model.geometry, grid)
    write_field_csv(path, r, z, reconstruct_field(model, state, grid))


def _settings(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    if getattr(args, "cycle", None):
        cfg = replace(cfg, cycle_path=Path(args.cycle))
    if getattr(args, "calibration", None):
        cfg = replace(cfg, calibration_path=Path(args.calibration))
    out = Path(args.out) if args.out else (cfg.out_dir or Path("out"))
    return cfg, out


def _need_cycle(cfg: RunConfig):
    if cfg.cycle_path is None:
        raise ConfigError("no drive cycle given; pass --cycle or set paths.cycle")
    return read_cycle_csv(cfg.cycle_path)


def _t0_estimate(cfg: RunConfig) -> float:
    return DEFAULT_T0_ESTIMATE if cfg.t0_estimate is None else cfg.t0_estimate


def cmd_simulate(cfg: RunConfig, out: Path, oracle: bool = False) -> dict:
    check_files(cfg.cycle_path, cfg.calibration_path)
    cycle = _need_cycle(cfg)
    cal = load_calibration(cfg.calibration_path) if cfg.calibration_path else None
    model = assemble_model(cfg.geometry, cfg.thermal, cfg.spectral)
    q = cycle_heat(cycle, cfg.geometry, cfg.ocv, cfg.cell).q
    xs = simulate(discretize(model, cycle.dt), q, model.uniform_state(cfg.thermal.t_ambient))
    z_meas = cycle.optional.get("z_imag")
    trace = trace_from_states(model, cycle.t, xs[: len(cycle)], cal, z_meas)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    _write_model_field(out / "field.csv", model, xs[-1], cfg.grid)
    summary = {"samples": len(cycle), "final": dict(zip(SENSORS, map(float, trace.temps[-1])))}
    if oracle:
        fd = solve_transient(cfg.geometry, cfg.thermal, q, cycle.dt, grid=cfg.twin.fd_grid)
        spectral = output_map_for_points(model)(xs)
        diff = np.abs(spectral - fd.probes)
        _write_table(out / "oracle.csv", ["t", *fd.labels, "Tmean"],
                     (row for row in np.column_stack([cycle.t[0] + fd.times, fd.probes, fd.mean])))
        report = {"max_abs_diff": dict(zip(fd.labels, map(float, diff.max(axis=0)))),
                  "max_abs_diff_all": float(diff.max()),
                  "fd_grid": [cfg.twin.fd_grid.n_r_cells, cfg.twin.fd_grid.n_z_cells, cfg.twin.fd_grid.dt_solver]}
        _write_json(out / "oracle_report.json", report)
        summary["oracle_max_abs_diff"] = report["max_abs_diff_all"]
    return summary


def cmd_twin(cfg: RunConfig, out: Path) -> dict:
    settings = TwinSettings(
        duration=cfg.twin.duration, i_max=cfg.twin.i_max, r0=cfg.r0, t_true0=cfg.twin.t_true0,
        t_estimate0=_t0_estimate(cfg), z_noise=cfg.z_noise, tc_noise=cfg.twin.tc_noise,
        converge_after=cfg.twin.converge_after, fd_grid=cfg.twin.fd_grid, true_calibration=cfg.impedance,
        calibrate=cfg.twin.calibrate, ekf=cfg.ekf, kf=cfg.kf,
    )
    res = run_twin(cfg.thermal, cfg.geometry, cfg.spectral, settings, seed=cfg.seed, ocv=cfg.ocv, cell=cfg.cell)
    out.mkdir(parents=True, exist_ok=True)
    write_cycle_csv(res.cycle, out / "cycle.csv")
    _write_table(out / "truth.csv", ["t", *SENSORS, "Tmean"],
                 np.column_stack([res.cycle.t, res.truth, res.truth_mean]))
    save_calibration(res.calibration, out / "calibration.json")
    model = assemble_model(cfg.geometry, cfg.thermal, cfg.spectral)
    for mode, trace in res.traces.items():
        write_trace_csv(trace, out / f"trace_{mode}.csv")
        _write_model_field(out / f"field_{mode}.csv", model, trace.x_hat[-1], cfg.grid)
    fd = res.fd
    write_field_csv(out / "field_truth.csv", fd.r, fd.z, fd.final_field)
    for sensor in ("T1", "T3"):
        bins, counts = res.histogram(sensor)
        modes = list(counts)
        _write_table(out / f"hist_{sensor}.csv", ["bin_lo", "bin_hi", *modes],
                     ([bins[i], bins[i + 1], *(counts[m][i] for m in modes)] for i in range(len(bins) - 1)))
    rows = res.summary()
    cols = list(rows[0])
    _write_table(out / "rmse_summary.csv", cols, ([r[c] for c in cols] for r in rows))
    return {"rmse": rows, "calibration": [res.calibration.a1, res.calibration.a2, res.calibration.a3]}


def cmd_identify(cfg: RunConfig, out: Path) -> dict:
    check_files(cfg.cycle_path)
    cycle = _need_cycle(cfg)
    s = cfg.identify
    problem = IdProblem(free_params=s.free, fixed=cfg.thermal, cycle=cycle, geometry=cfg.geometry,
                        config=cfg.spectral, bounds=s.bounds, t_initial=s.t_initial, ocv=cfg.ocv, cell=cfg.cell)
    result = identify(problem, seed=cfg.seed, n_starts=s.n_starts, n_polish=s.n_polish)
    out.mkdir(parents=True, exist_ok=True)
    save_report(result, out / "identification.json")
    return {"identified": result.values, "objective": result.objective, "rmse": result.rmse}


def cmd_calibrate(cfg: RunConfig, out: Path) -> dict:
    check_files(cfg.cycle_path)
    cycle = _need_cycle(cfg)
    model = assemble_model(cfg.geometry, cfg.thermal, cfg.spectral)
    # the filter starts from an equilibrated cell (uniform at ambient)
    cal = calibrate_pipeline(cycle, model, cfg.kf, use_kf=cycle.has("T3"), ocv=cfg.ocv, cell=cfg.cell,
                             frequency=cfg.impedance.frequency)
    out.mkdir(parents=True, exist_ok=True)
    save_calibration(cal, out / "calibration.json")
    return {"a1": cal.a1, "a2": cal.a2, "a3": cal.a3, "t_range": list(cal.t_range),
            "rms_residual": cal.rms_residual, "warnings": list(cal.warnings)}


def cmd_estimate(cfg: RunConfig, out: Path) -> dict:
    if cfg.mode == "ekf_z" and cfg.calibration_path is None:
        raise ConfigError("ekf_z mode needs an impedance calibration; pass --calibration or set paths.calibration")
    check_files(cfg.cycle_path, cfg.calibration_path)
    cycle = _need_cycle(cfg)
    cal = load_calibration(cfg.calibration_path) if cfg.calibration_path else None
    model = assemble_model(cfg.geometry, cfg.thermal, cfg.spectral)
    trace = run_estimator(cycle, model, cal, cfg.estimator_config(), cfg.mode, t0_estimate=_t0_estimate(cfg),
                          ocv=cfg.ocv, cell=cfg.cell)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, out / "trace.csv")
    _write_model_field(out / "field.csv", model, trace.x_hat[-1], cfg.grid)
    return {"mode": cfg.mode, "final": dict(zip(SENSORS, map(float, trace.temps[-1]))),
            "final_mean": float(trace.t_mean[-1])}


def cmd_synth_cycle(cfg: RunConfig, out: Path) -> dict:
    cycle = synth_hev_cycle(cfg.seed, cfg.twin.duration, i_max=cfg.twin.i_max, r0=cfg.r0, dt=cfg.ekf.dt,
                            ocv=cfg.ocv, cell=cfg.cell)
    out.mkdir(parents=True, exist_ok=True)
    write_cycle_csv(cycle, out / "cycle.csv")
    return {"samples": len(cycle), "max_abs_current": float(np.abs(cycle.current).max())}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itd2d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, cycle=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory (default: paths.out or ./out)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        if cycle:
            p.add_argument("--cycle", help="drive-cycle CSV (overrides paths.cycle)")
        return p

    p = add("simulate", "open-loop simulation of a drive cycle")
    p.add_argument("--calibration", help="impedance calibration JSON for the z_pred column")
    p.add_argument("--oracle", action="store_true", help="also run the finite-volume oracle and report max |diff|")
    add("twin", "synthetic-twin experiment bundle", cycle=False)
    add("identify", "fit conductivity and convection coefficients to T1..T4")
    add("calibrate", "fit the impedance-temperature quadratic")
    p = add("estimate", "run a state estimator over a drive cycle")
    p.add_argument("--calibration", help="impedance calibration JSON")
    p.add_argument("--mode", choices=MODES, help="estimator (overrides estimator.mode)")
    add("synth-cycle", "write a seeded synthetic HEV-style cycle", cycle=False)
    return parser


COMMANDS = {
    "simulate": lambda cfg, out, args: cmd_simulate(cfg, out, oracle=args.oracle),
    "twin": lambda cfg, out, args: cmd_twin(cfg, out),
    "identify": lambda cfg, out, args: cmd_identify(cfg, out),
    "calibrate": lambda cfg, out, args: cmd_calibrate(cfg, out),
    "estimate": lambda cfg, out, args: cmd_estimate(cfg, out),
    "synth-cycle": lambda cfg, out, args: cmd_synth_cycle(cfg, out),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, out = _settings(args)
        summary = COMMANDS[args.command](cfg, out, args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
