"""Offline identification of thermal parameters and drive-cycle impedance calibration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import optimize, signal
from scipy.stats import qmc

from .drivecycle import CellElectrical, DriveCycle, OcvTable, cycle_heat
from .errors import CalibrationError, IdentificationError, InputError
from .estimation import EstimatorConfig, run_estimator
from .impedance import ImpedanceCalibration, calibrate
from .model import (
    StateSpaceModel, TensorLegendreBasis, assemble_model, discretize, inputs, mean_temperature_row, modal_decomposition,
    simulate,
)
from .params import REFERENCE_GEOMETRY, CellGeometry, SpectralConfig, ThermalParams

FREE_PARAMS = ("k_z", "h_left", "h_right", "h_side")
DEFAULT_BOUNDS = {
    "k_z": (1.0, 100.0),
    "h_left": (0.1, 500.0),
    "h_right": (0.1, 500.0),
    "h_side": (0.1, 500.0),
}
SENSORS = ("T1", "T2", "T3", "T4")


@dataclass(frozen=True, eq=False)
class IdProblem:
    """Fit ``free_params`` of ``fixed`` to the T1..T4 columns of ``cycle``.

    The cell is assumed to start uniform at ``t_initial`` (default: ambient).
    """

    free_params: tuple[str, ...]
    fixed: ThermalParams
    cycle: DriveCycle
    geometry: CellGeometry = REFERENCE_GEOMETRY
    config: SpectralConfig = SpectralConfig()
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    heat: np.ndarray | None = None
    t_initial: float | None = None
    ocv: OcvTable = OcvTable()
    cell: CellElectrical = CellElectrical()

    def __post_init__(self):
        free = tuple(self.free_params)
        if not free:
            raise InputError("no free parameters to identify")
        bad = [p for p in free if p not in FREE_PARAMS]
        if bad:
            raise InputError(f"cannot identify {', '.join(bad)}; choose from {', '.join(FREE_PARAMS)}")
        bounds = {p: tuple(float(v) for v in self.bounds.get(p, DEFAULT_BOUNDS[p])) for p in free}
        for p, (lo, hi) in bounds.items():
            if not (0 < lo < hi):
                raise InputError(f"bounds for {p} must satisfy 0 < lo < hi, got ({lo}, {hi})")
        self.cycle.require(*SENSORS)
        heat = self.heat
        if heat is None:
            heat = cycle_heat(self.cycle, self.geometry, self.ocv, self.cell).q
        heat = np.asarray(heat, dtype=float)
        if len(heat) != len(self.cycle):
            raise InputError("heat series length differs from the cycle length")
        object.__setattr__(self, "free_params", free)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "heat", heat)

    @property
    def measured(self) -> np.ndarray:
        return np.column_stack([self.cycle.column(s) for s in SENSORS])

    def params_for(self, theta) -> ThermalParams:
        if isinstance(theta, dict):
            values = {p: float(theta[p]) for p in self.free_params}
        else:
            theta = np.asarray(theta, dtype=float).ravel()
            if len(theta) != len(self.free_params):
                raise InputError(f"expected {len(self.free_params)} parameter values, got {len(theta)}")
            values = dict(zip(self.free_params, map(float, theta)))
        return self.fixed.with_values(**values)


def model_outputs(params: ThermalParams, problem: IdProblem) -> np.ndarray | None:
    """Open-loop T1..T4 at every cycle sample; None if the candidate model is unstable.

    Runs in the E-orthonormal modal basis, where the zero-order-hold recursion
    decouples into scalar first-order filters.
    """
    model = assemble_model(problem.geometry, params, problem.config)
    rates, V = modal_decomposition(model)
    if rates.min() < -1e-9 * max(1.0, abs(rates).max()):
        return None
    dt = problem.cycle.dt
    decay = np.exp(-rates * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(rates > 1e-14, -np.expm1(-rates * dt) / rates, dt)
    drive = inputs(problem.heat) @ (V.T @ model.B).T
    t0 = params.t_ambient if problem.t_initial is None else problem.t_initial
    z0 = V.T @ model.E @ model.uniform_state(t0)
    modal = np.empty_like(drive)
    for i in range(len(rates)):
        modal[:, i], _ = signal.lfilter([0.0, phi[i]], [1.0, -decay[i]], drive[:, i], zi=[z0[i]])
    C, offset = _probe_rows(problem.geometry, problem.config, model.t_ref)
    y = modal @ (C @ V).T + offset
    return y if np.all(np.isfinite(y)) else None


@lru_cache(maxsize=16)
def _probe_rows(geometry: CellGeometry, config: SpectralConfig, t_ref: float):
    basis = TensorLegendreBasis(config.n_r, config.n_z, geometry.r_in, geometry.r_out, geometry.height)
    C = np.array([basis.row(*geometry.default_probes()[s]) for s in SENSORS])
    return C, np.full(len(SENSORS), t_ref)


def residual(theta, problem: IdProblem) -> np.ndarray:
    """Per-sample model-minus-measurement errors, shape (N, 4); inf rows for unstable candidates."""
    params = problem.params_for(theta)
    for p in problem.free_params:
        lo, hi = problem.bounds[p]
        v = getattr(params, p)
        if not lo <= v <= hi:
            raise InputError(f"{p}={v} lies outside its bounds [{lo}, {hi}]")
    y = model_outputs(params, problem)
    if y is None:
        return np.full((len(problem.cycle), len(SENSORS)), np.inf)
    return y - problem.measured


def objective(theta, problem: IdProblem) -> float:
    """Sum over samples of the Euclidean norm of the 4-sensor error."""
    eps = residual(theta, problem)
    if not np.all(np.isfinite(eps)):
        return np.inf
    return float(np.sum(np.linalg.norm(eps, axis=1)))


@dataclass(frozen=True)
class IdResult:
    params: ThermalParams
    values: dict[str, float]
    objective: float
    rmse: dict[str, float]
    bounds: dict[str, tuple[float, float]]
    n_evaluations: int
    n_iterations: int
    start_objectives: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "identified": self.values,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "objective": self.objective,
            "rmse": self.rmse,
            "n_evaluations": self.n_evaluations,
            "n_iterations": self.n_iterations,
            "start_objectives": list(self.start_objectives),
            "thermal": {k: getattr(self.params, k) for k in
                        ("rho", "cp", "k_r", "k_z", "h_left", "h_right", "h_side", "t_ambient")},
        }


def identify(problem: IdProblem, seed: int = 0, n_starts: int = 16, n_polish: int = 4,
             maxfev: int = 4000) -> IdResult:
    """Bounded Nelder-Mead in log-parameter space from the best Latin-hypercube starts."""
    box_lo = np.array([problem.bounds[p][0] for p in problem.free_params])
    box_hi = np.array([problem.bounds[p][1] for p in problem.free_params])
    lo, hi = np.log(box_lo), np.log(box_hi)
    evals = 0

    def to_theta(u):
        return np.clip(np.exp(u), box_lo, box_hi)

    def f(u):
        nonlocal evals
        evals += 1
        return objective(to_theta(u), problem)

    sampler = qmc.LatinHypercube(d=len(lo), seed=np.random.default_rng(seed))
    starts = qmc.scale(sampler.random(n_starts), lo, hi)
    start_vals = np.array([f(u) for u in starts])
    finite = np.isfinite(start_vals)
    if not finite.any():
        raise IdentificationError("no start point in the parameter box gives a finite objective")

    best_u, best_f = starts[np.argmin(start_vals)], float(start_vals.min())
    iterations = 0
    bounds = list(zip(lo, hi))
    opts = {"xatol": 1e-7, "fatol": 1e-8, "maxfev": maxfev, "adaptive": True}
    for idx in np.argsort(start_vals)[:n_polish]:
        if not np.isfinite(start_vals[idx]):
            continue
        u = starts[idx]
        for _ in range(2):  # one restart guards against a collapsed simplex
            res = optimize.minimize(f, u, method="Nelder-Mead", bounds=bounds, options=opts)
            iterations += res.nit
            u = res.x
            if res.fun < best_f:
                best_u, best_f = res.x, float(res.fun)
    if not np.isfinite(best_f):
        raise IdentificationError("identification found no finite-objective point")

    values = dict(zip(problem.free_params, map(float, to_theta(best_u))))
    params = problem.params_for(values)
    eps = residual(values, problem)
    rmse = dict(zip(SENSORS, map(float, np.sqrt(np.mean(eps**2, axis=0)))))
    return IdResult(params=params, values=values, objective=best_f, rmse=rmse, bounds=problem.bounds,
                    n_evaluations=evals, n_iterations=iterations, start_objectives=tuple(map(float, start_vals)))


def save_report(result: IdResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2) + "\n", encoding="utf-8")


def calibrate_pipeline(
    cycle: DriveCycle,
    model: StateSpaceModel,
    cfg: EstimatorConfig,
    use_kf: bool = True,
    t0_estimate: float | None = None,
    heat: np.ndarray | None = None,
    ocv: OcvTable = OcvTable(),
    cell: CellElectrical = CellElectrical(),
    frequency: float = 215.0,
) -> ImpedanceCalibration:
    """Pair the filtered (or open-loop) mean temperature with each impedance sample and fit the quadratic.

    The filter starts from a uniform field at ``t0_estimate`` (default:
    ambient, i.e. an equilibrated cell).
    """
    cycle.require("z_imag")
    if use_kf:
        cycle.require("T3")
    z = cycle.optional["z_imag"]
    have = ~np.isnan(z)
    if have.sum() < 3:
        raise CalibrationError(f"need at least 3 impedance samples, cycle has {int(have.sum())}")
    if use_kf:
        trace = run_estimator(cycle, model, None, cfg, "kf_t3", t0_estimate=t0_estimate, heat=heat,
                              ocv=ocv, cell=cell)
        t_mean = trace.t_mean
        how = "KF(T3) mean temperature"
    else:
        q = cycle_heat(cycle, model.geometry, ocv, cell).q if heat is None else heat
        t0 = model.params.t_ambient if t0_estimate is None else t0_estimate
        x = simulate(discretize(model, cycle.dt), q, model.uniform_state(t0))[: len(cycle)]
        row, off = mean_temperature_row(model)
        t_mean = x @ row + off
        how = "open-loop mean temperature"
    pairs = np.column_stack([t_mean[have], z[have]])
    return calibrate(pairs, frequency=frequency, provenance=f"drive-cycle calibration against {how}")
