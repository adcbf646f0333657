"""Synthetic-twin experiments: a dense oracle plays the cell, the reduced model runs the filters.

The twin mirrors the offline/online flow: a seeded HEV-style cycle drives the
finite-volume "true" cell from a uniform start; impedance readings (every
``meas_period``) and thermocouple readings (every sample) are synthesized
with seeded Gaussian noise; the impedance map is calibrated from the cycle
with the thermocouple KF; then open-loop, KF(T3) and EKF(Z'') estimators run
from a deliberately wrong uniform initial estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drivecycle import CellElectrical, DriveCycle, OcvTable, cycle_heat, synth_hev_cycle
from .estimation import EstimatorConfig, EstimatorTrace, ekf_config, kf_config, run_estimator
from .fdm import FdGrid, FdResult, solve_transient
from .impedance import SYNTHETIC_CALIBRATION, ImpedanceCalibration, synth_measurement
from .model import assemble_model
from .params import REFERENCE_GEOMETRY, CellGeometry, SpectralConfig, ThermalParams
from .sysid import calibrate_pipeline

SENSORS = ("T1", "T2", "T3", "T4")


@dataclass(frozen=True)
class TwinSettings:
    duration: float = 2400.0
    i_max: float = 50.0
    r0: float = 0.020
    t_true0: float | None = None  # default: ambient
    t_estimate0: float = 25.0
    z_noise: float = 3e-5
    tc_noise: float = 5e-4
    converge_after: float = 300.0
    fd_grid: FdGrid = FdGrid(200, 200, 0.1)
    true_calibration: ImpedanceCalibration = SYNTHETIC_CALIBRATION
    calibrate: bool = True
    ekf: EstimatorConfig = field(default_factory=ekf_config)
    kf: EstimatorConfig = field(default_factory=kf_config)


@dataclass(frozen=True)
class TwinResult:
    cycle: DriveCycle  # carries the noisy measurements
    heat: np.ndarray
    truth: np.ndarray  # (N, 4) noise-free probe temperatures
    truth_mean: np.ndarray
    fd: FdResult
    calibration: ImpedanceCalibration
    traces: dict[str, EstimatorTrace]
    settings: TwinSettings

    def errors(self, mode: str) -> np.ndarray:
        return self.traces[mode].temps - self.truth

    def rmse(self, mode: str, sensor: str, after: float | None = None) -> float:
        after = self.settings.converge_after if after is None else after
        keep = self.cycle.t - self.cycle.t[0] >= after
        e = self.errors(mode)[keep, SENSORS.index(sensor)]
        return float(np.sqrt(np.mean(e**2)))

    def convergence_time(self, mode: str, sensor: str = "T1", tol: float = 1.0) -> float:
        """First time after which |error| stays below ``tol`` for the rest of the run (inf if never)."""
        e = np.abs(self.errors(mode)[:, SENSORS.index(sensor)])
        bad = np.flatnonzero(e >= tol)
        if len(bad) == 0:
            return 0.0
        if bad[-1] == len(e) - 1:
            return float("inf")
        return float(self.cycle.t[bad[-1] + 1] - self.cycle.t[0])

    def summary(self) -> list[dict]:
        rows = []
        for mode in self.traces:
            row = {"mode": mode}
            row.update({f"{s}_rmse": self.rmse(mode, s) for s in SENSORS})
            e_mean = self.traces[mode].t_mean - self.truth_mean
            keep = self.cycle.t - self.cycle.t[0] >= self.settings.converge_after
            row["Tmean_rmse"] = float(np.sqrt(np.mean(e_mean[keep] ** 2)))
            row["T1_converge_s"] = self.convergence_time(mode, "T1")
            rows.append(row)
        return rows

    def histogram(self, sensor: str, bins: np.ndarray | None = None) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Post-convergence error counts per mode on shared bins."""
        keep = self.cycle.t - self.cycle.t[0] >= self.settings.converge_after
        col = SENSORS.index(sensor)
        errs = {m: self.errors(m)[keep, col] for m in self.traces}
        if bins is None:
            bins = np.linspace(-1.0, 1.0, 41)
        return bins, {m: np.histogram(e, bins=bins)[0] for m, e in errs.items()}


def synthesize_measurements(cycle: DriveCycle, truth: np.ndarray, truth_mean: np.ndarray,
                            settings: TwinSettings, seed: int) -> DriveCycle:
    rng = np.random.default_rng([seed, 1])
    t_rel = cycle.t - cycle.t[0]
    period = settings.ekf.meas_period
    on_grid = np.abs(np.mod(t_rel + 0.5, period) - 0.5) < 1e-6
    z = synth_measurement(settings.true_calibration, truth_mean, settings.z_noise, rng)
    z = np.where(on_grid, z, np.nan)
    temps = truth + rng.normal(0.0, settings.tc_noise, truth.shape) if settings.tc_noise > 0 else truth.copy()
    return cycle.with_columns(z_imag=z, **{s: temps[:, i] for i, s in enumerate(SENSORS)})


def run_twin(
    params: ThermalParams,
    geometry: CellGeometry = REFERENCE_GEOMETRY,
    spectral: SpectralConfig = SpectralConfig(),
    settings: TwinSettings = TwinSettings(),
    seed: int = 0,
    ocv: OcvTable = OcvTable(),
    cell: CellElectrical = CellElectrical(),
    modes: tuple[str, ...] = ("open_loop", "kf_t3", "ekf_z"),
) -> TwinResult:
    base = synth_hev_cycle(seed, settings.duration, i_max=settings.i_max, r0=settings.r0,
                           dt=settings.ekf.dt, ocv=ocv, cell=cell)
    heat = cycle_heat(base, geometry, ocv, cell).q
    t_true0 = params.t_ambient if settings.t_true0 is None else settings.t_true0
    fd = solve_transient(geometry, params, heat, base.dt, t0_field=t_true0, grid=settings.fd_grid)
    n = len(base)
    truth, truth_mean = fd.probes[:n], fd.mean[:n]
    cycle = synthesize_measurements(base, truth, truth_mean, settings, seed)

    model = assemble_model(geometry, params, spectral)
    if settings.calibrate:
        cal = calibrate_pipeline(cycle, model, settings.kf, t0_estimate=t_true0, heat=heat,
                                 frequency=settings.true_calibration.frequency)
    else:
        cal = settings.true_calibration

    traces = {}
    for mode in modes:
        cfg = settings.kf if mode == "kf_t3" else settings.ekf
        traces[mode] = run_estimator(cycle, model, cal, cfg, mode, t0_estimate=settings.t_estimate0, heat=heat)
    return TwinResult(cycle=cycle, heat=heat, truth=truth, truth_mean=truth_mean, fd=fd, calibration=cal,
                      traces=traces, settings=settings)
