"""Kalman filtering on the discrete reduced thermal model.

Two measurement models are supported: the linear thermocouple reading of the
mid-height surface temperature (KF) and the imaginary impedance, a quadratic
function of the volume-average temperature (EKF). Both use the Joseph form of
the covariance update.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .drivecycle import CellElectrical, DriveCycle, OcvTable, cycle_heat
from .errors import CalibrationError, FilterDivergenceError, InputError
from .impedance import ImpedanceCalibration, predict_z
from .model import (
    DiscreteStateSpace, StateSpaceModel, discretize, inputs, mean_temperature_row, output_map_for_points,
)

TRACE_COLUMNS = ("t", "x_norm", "T1", "T2", "T3", "T4", "Tmean", "z_pred", "z_meas", "innovation")

MODES = ("ekf_z", "kf_t3", "open_loop")


@dataclass(frozen=True)
class EstimatorConfig:
    """Filter tuning.

    ``r_meas`` is the measurement variance (ohm^2 for the impedance EKF,
    degC^2 for the thermocouple KF). The process covariance is
    ``2 * q_proc_beta**2 * I``. ``p0_std`` sets the initial covariance
    ``p0_std**2 * I``.
    """

    r_meas: float
    q_proc_beta: float
    meas_period: float = 24.0
    dt: float = 1.0
    p0_std: float = 10.0

    def __post_init__(self):
        if not self.r_meas > 0:
            raise InputError(f"r_meas must be positive, got {self.r_meas}")
        if self.q_proc_beta < 0:
            raise InputError(f"q_proc_beta must be non-negative, got {self.q_proc_beta}")
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        ratio = self.meas_period / self.dt
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise InputError(f"meas_period {self.meas_period} must be an integer multiple of dt {self.dt}")

    @property
    def meas_stride(self) -> int:
        return int(round(self.meas_period / self.dt))

    def process_noise(self, n: int) -> np.ndarray:
        return 2.0 * self.q_proc_beta**2 * np.eye(n)


def ekf_config(sigma_n: float = 3e-5, beta_v: float = 5e-3, **kw) -> EstimatorConfig:
    return EstimatorConfig(r_meas=sigma_n**2, q_proc_beta=beta_v, **kw)


def kf_config(sigma_n: float = 5e-4, beta_v: float = 0.05, **kw) -> EstimatorConfig:
    return EstimatorConfig(r_meas=sigma_n**2, q_proc_beta=beta_v, **kw)


@dataclass(frozen=True)
class EstimatorState:
    x_hat: np.ndarray
    p: np.ndarray
    k: int = 0


def initial_state(model: StateSpaceModel, t_uniform: float, cfg: EstimatorConfig) -> EstimatorState:
    n = model.n_states
    return EstimatorState(model.uniform_state(t_uniform), cfg.p0_std**2 * np.eye(n), 0)


def _symmetrize(p):
    return 0.5 * (p + p.T)


def time_update(state: EstimatorState, model: DiscreteStateSpace, u, cfg: EstimatorConfig) -> EstimatorState:
    x = model.A_bar @ state.x_hat + model.B_bar @ np.asarray(u, dtype=float)
    p = model.A_bar @ state.p @ model.A_bar.T + cfg.process_noise(len(x))
    return EstimatorState(x, _symmetrize(p), state.k + 1)


def _linear_update(state: EstimatorState, h: np.ndarray, innovation: float, r: float) -> EstimatorState:
    ph = state.p @ h
    s = float(h @ ph) + r
    if not (np.isfinite(s) and s > 0):
        raise FilterDivergenceError(f"innovation covariance {s!r} is not positive at step {state.k}")
    gain = ph / s
    x = state.x_hat + gain * innovation
    ikh = np.eye(len(x)) - np.outer(gain, h)
    p = ikh @ state.p @ ikh.T + r * np.outer(gain, gain)
    return EstimatorState(x, _symmetrize(p), state.k)


def impedance_jacobian(x: np.ndarray, cal: ImpedanceCalibration, mean_row: tuple[np.ndarray, float]) -> np.ndarray:
    row, offset = mean_row
    t_mean = float(row @ x) + offset
    return float(cal.slope(t_mean)) * row


def ekf_measurement_update(state: EstimatorState, z_meas: float, cal: ImpedanceCalibration,
                           mean_row: tuple[np.ndarray, float], cfg: EstimatorConfig):
    """Returns (posterior state, innovation z - f(x_prior))."""
    row, offset = mean_row
    t_mean = float(row @ state.x_hat) + offset
    slope = float(cal.slope(t_mean))
    if slope == 0.0:
        raise CalibrationError(f"impedance map has zero slope at T={t_mean:.3g} degC; temperature unobservable")
    innovation = float(z_meas) - predict_z(cal, t_mean)
    return _linear_update(state, slope * row, innovation, cfg.r_meas), innovation


def kf_measurement_update(state: EstimatorState, t3_meas: float, output_row: tuple[np.ndarray, float],
                          cfg: EstimatorConfig):
    row, offset = output_row
    innovation = float(t3_meas) - (float(row @ state.x_hat) + offset)
    return _linear_update(state, np.asarray(row, dtype=float), innovation, cfg.r_meas), innovation


@dataclass(frozen=True)
class EstimatorTrace:
    t: np.ndarray
    x_hat: np.ndarray  # (N, n)
    temps: np.ndarray  # (N, 4): T1..T4
    t_mean: np.ndarray
    z_pred: np.ndarray  # NaN without a calibration
    z_meas: np.ndarray  # NaN where the cycle carries no impedance sample
    innovation: np.ndarray
    mode: str
    labels: tuple[str, ...] = ("T1", "T2", "T3", "T4")

    def column(self, label: str) -> np.ndarray:
        return self.temps[:, self.labels.index(label)]


def measurement_mask(cycle: DriveCycle, column: str, cfg: EstimatorConfig) -> np.ndarray:
    """Samples on the measurement cadence that actually carry a value."""
    t_rel = cycle.t - cycle.t[0]
    on_grid = np.abs(np.mod(t_rel + 0.5 * cfg.dt, cfg.meas_period) - 0.5 * cfg.dt) < 1e-6 * cfg.dt
    return on_grid & ~np.isnan(cycle.optional[column])


def run_estimator(
    cycle: DriveCycle,
    model: StateSpaceModel,
    cal: ImpedanceCalibration | None,
    cfg: EstimatorConfig,
    mode: str,
    t0_estimate: float | None = None,
    heat: np.ndarray | None = None,
    ocv: OcvTable = OcvTable(),
    cell: CellElectrical = CellElectrical(),
    dss: DiscreteStateSpace | None = None,
) -> EstimatorTrace:
    """Filter a whole cycle.

    Time updates run every sample with the heat of the previous sample held;
    measurement updates happen at samples on the ``meas_period`` grid that
    carry a measurement. ``heat`` (W m^-3) overrides the heat computed from
    current and voltage.
    """
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode == "ekf_z":
        if cal is None:
            raise InputError("ekf_z mode needs an impedance calibration")
        cycle.require("z_imag")
    elif mode == "kf_t3":
        cycle.require("T3")
    if len(cycle) == 0:
        raise InputError("empty drive cycle")
    if abs(cycle.dt - cfg.dt) > 1e-9 * cfg.dt:
        raise InputError(f"cycle sample period {cycle.dt} differs from estimator dt {cfg.dt}")

    q = cycle_heat(cycle, model.geometry, ocv, cell).q if heat is None else np.asarray(heat, dtype=float)
    u = inputs(q)
    dss = discretize(model, cfg.dt) if dss is None else dss
    out = output_map_for_points(model)
    mrow = mean_temperature_row(model)
    t3_row = out.row("T3")

    if mode == "ekf_z":
        mask, meas = measurement_mask(cycle, "z_imag", cfg), cycle.optional["z_imag"]
    elif mode == "kf_t3":
        mask, meas = measurement_mask(cycle, "T3", cfg), cycle.optional["T3"]
    else:
        mask, meas = np.zeros(len(cycle), dtype=bool), None

    t0 = model.params.t_ambient if t0_estimate is None else t0_estimate
    state = initial_state(model, t0, cfg)
    n = len(cycle)
    xs = np.empty((n, model.n_states))
    z_meas = np.full(n, np.nan)
    innov = np.full(n, np.nan)
    for k in range(n):
        if k > 0:
            state = time_update(state, dss, u[k - 1], cfg)
        if mask[k]:
            if mode == "ekf_z":
                state, innov[k] = ekf_measurement_update(state, meas[k], cal, mrow, cfg)
            else:
                state, innov[k] = kf_measurement_update(state, meas[k], t3_row, cfg)
        xs[k] = state.x_hat

    temps = out(xs)
    t_mean = xs @ mrow[0] + mrow[1]
    z_pred = predict_z(cal, t_mean) if cal is not None else np.full(n, np.nan)
    if "z_imag" in cycle.optional:
        z_meas = cycle.optional["z_imag"].copy()
    return EstimatorTrace(t=cycle.t.copy(), x_hat=xs, temps=temps, t_mean=t_mean, z_pred=np.asarray(z_pred),
                          z_meas=z_meas, innovation=innov, mode=mode, labels=out.labels)


def trace_from_states(model: StateSpaceModel, t: np.ndarray, xs: np.ndarray,
                      cal: ImpedanceCalibration | None = None, z_meas: np.ndarray | None = None) -> EstimatorTrace:
    """Open-loop trace for a precomputed state sequence."""
    out = output_map_for_points(model)
    row, off = mean_temperature_row(model)
    t_mean = xs @ row + off
    n = len(t)
    return EstimatorTrace(
        t=np.asarray(t, dtype=float), x_hat=xs, temps=out(xs), t_mean=t_mean,
        z_pred=np.asarray(predict_z(cal, t_mean)) if cal is not None else np.full(n, np.nan),
        z_meas=np.full(n, np.nan) if z_meas is None else np.asarray(z_meas, dtype=float),
        innovation=np.full(n, np.nan), mode="open_loop", labels=out.labels,
    )


def _cell(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_trace_csv(trace: EstimatorTrace, path) -> None:
    cols = [trace.t, np.linalg.norm(trace.x_hat, axis=1), *trace.temps.T, trace.t_mean,
            trace.z_pred, trace.z_meas, trace.innovation]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in zip(*cols):
            w.writerow([_cell(v) for v in row])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[math.nan if v == "" else float(v) for v in r] for r in rows[1:]]).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}
