"""Dense finite-volume reference solver for the same boundary-value problem.

Cell-centred grid with conservative radial fluxes (face radius times the
central difference), ghost-cell Robin conditions on every face and the
mirror condition at the mandrel. Time stepping is backward Euler. Because the
discrete operator is a Kronecker sum of a radial and an axial tridiagonal
operator, each implicit step is solved exactly in the product eigenbasis of
the two 1-D generalized eigenproblems (fast diagonalization), which keeps a
200 x 200 grid cheap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .errors import DomainError, InputError, NoSteadyStateError, OracleDivergenceError
from .params import CellGeometry, ThermalParams

DIVERGENCE_LIMIT = 1e3
SCHEME = "backward-Euler finite-volume scheme"


@dataclass(frozen=True)
class FdGrid:
    n_r_cells: int = 200
    n_z_cells: int = 200
    dt_solver: float = 0.1

    def __post_init__(self):
        if self.n_r_cells < 10 or self.n_z_cells < 10:
            raise InputError(f"grid needs at least 10 cells per direction, got {self.n_r_cells}x{self.n_z_cells}")
        if not self.dt_solver > 0.0:
            raise InputError(f"dt_solver must be positive, got {self.dt_solver}")


def _effective_h(h: float, k: float, d: float) -> float:
    # ghost-cell Robin: face value T_f = T_c / (1 + h d / 2k)
    return h / (1.0 + 0.5 * h * d / k)


def _tridiagonal(conductance: np.ndarray, n: int) -> np.ndarray:
    L = np.zeros((n, n))
    idx = np.arange(n - 1)
    L[idx, idx] += conductance
    L[idx + 1, idx + 1] += conductance
    L[idx, idx + 1] -= conductance
    L[idx + 1, idx] -= conductance
    return L


class FdOperator:
    """Semi-discrete system rho*cp * M dtheta/dt = -S theta + q * vol, theta = T - T_inf."""

    def __init__(self, geometry: CellGeometry, params: ThermalParams, grid: FdGrid = FdGrid()):
        self.geometry = geometry
        self.params = params
        self.grid = grid
        nr, nz = grid.n_r_cells, grid.n_z_cells
        self.dr = (geometry.r_out - geometry.r_in) / nr
        self.dz = geometry.height / nz
        self.r = geometry.r_in + (np.arange(nr) + 0.5) * self.dr
        self.z = (np.arange(nz) + 0.5) * self.dz
        r_faces = geometry.r_in + np.arange(1, nr) * self.dr

        self.hr_out = _effective_h(params.h_side, params.k_r, self.dr)
        self.hz_left = _effective_h(params.h_left, params.k_z, self.dz)
        self.hz_right = _effective_h(params.h_right, params.k_z, self.dz)

        self.L_r = _tridiagonal(params.k_r * r_faces / self.dr, nr)
        self.L_r[-1, -1] += geometry.r_out * self.hr_out
        self.L_z = _tridiagonal(np.full(nz - 1, params.k_z / self.dz), nz)
        self.L_z[0, 0] += self.hz_left
        self.L_z[-1, -1] += self.hz_right
        self.m_r = self.r * self.dr
        self.m_z = np.full(nz, self.dz)
        self.volume = np.outer(self.m_r, self.m_z)

        mu_r, self.V_r = linalg.eigh(self.L_r, np.diag(self.m_r))
        mu_z, self.V_z = linalg.eigh(self.L_z, np.diag(self.m_z))
        self.rates = np.clip(mu_r, 0.0, None)[:, None] + np.clip(mu_z, 0.0, None)[None, :]
        self.load_modal = np.outer(self.V_r.T @ self.m_r, self.V_z.T @ self.m_z)

    # modal <-> cell transforms
    def to_modal(self, theta: np.ndarray) -> np.ndarray:
        return self.V_r.T @ (self.m_r[:, None] * theta * self.m_z[None, :]) @ self.V_z

    def to_cells(self, a: np.ndarray) -> np.ndarray:
        return self.V_r @ a @ self.V_z.T

    def step_factors(self, dt_sample: float):
        """Amplification of m backward-Euler substeps covering one sample."""
        m = int(round(dt_sample / self.grid.dt_solver))
        if m < 1 or abs(m * self.grid.dt_solver - dt_sample) > 1e-9 * dt_sample:
            raise InputError(f"sample period {dt_sample} is not a multiple of dt_solver {self.grid.dt_solver}")
        c = self.params.heat_capacity
        alpha = 1.0 / (1.0 + self.grid.dt_solver * self.rates / c)
        decay = alpha**m
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(self.rates > 0.0, (1.0 - decay) / self.rates, m * self.grid.dt_solver / c)
        return decay, gain * self.load_modal

    def be_step(self, theta: np.ndarray, q: float, dt: float) -> np.ndarray:
        """One backward-Euler step of size dt in cell space."""
        c = self.params.heat_capacity
        a = self.to_modal(theta)
        a = (a + dt / c * q * self.load_modal) / (1.0 + dt * self.rates / c)
        return self.to_cells(a)

    def stored_energy(self, theta: np.ndarray) -> float:
        return self.params.heat_capacity * float(np.sum(theta * self.volume))

    def boundary_loss(self, theta: np.ndarray) -> float:
        """Convective heat-loss rate (per radian) for a deviation field."""
        side = self.hr_out * self.geometry.r_out * float(np.sum(theta[-1, :] * self.m_z))
        ends = float(np.sum((self.hz_left * theta[:, 0] + self.hz_right * theta[:, -1]) * self.m_r))
        return side + ends

    def probe_functional(self, r: float, z: float) -> tuple[np.ndarray, np.ndarray]:
        """Separable weights (w_r, w_z) with probe value w_r @ theta @ w_z."""
        g = self.geometry
        if not g.contains(r, z):
            raise DomainError(f"probe ({r}, {z}) lies outside the cell")
        p = self.params
        ext_r = _extension(len(self.r), 0.0, p.h_side * self.dr / (2 * p.k_r))
        ext_z = _extension(len(self.z), p.h_left * self.dz / (2 * p.k_z), p.h_right * self.dz / (2 * p.k_z))
        nodes_r = np.concatenate([[g.r_in], self.r, [g.r_out]])
        nodes_z = np.concatenate([[0.0], self.z, [g.height]])
        return ext_r.T @ _hat_weights(nodes_r, r), ext_z.T @ _hat_weights(nodes_z, z)


def _extension(n: int, bi_first: float, bi_last: float) -> np.ndarray:
    """Map cell deviations to [face, cells..., face]; face = cell / (1 + h d / 2k)."""
    E = np.zeros((n + 2, n))
    E[1:-1] = np.eye(n)
    E[0, 0] = 1.0 / (1.0 + bi_first)
    E[-1, -1] = 1.0 / (1.0 + bi_last)
    return E


def _hat_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    x = min(max(x, nodes[0]), nodes[-1])
    i = int(np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2))
    t = (x - nodes[i]) / (nodes[i + 1] - nodes[i])
    w = np.zeros(len(nodes))
    w[i] = 1.0 - t
    w[i + 1] = t
    return w


@dataclass(frozen=True)
class FdResult:
    times: np.ndarray
    probes: np.ndarray  # (N + 1, n_probes), absolute temperature
    mean: np.ndarray  # (N + 1,), volume average
    labels: tuple[str, ...]
    final_field: np.ndarray  # (n_r_cells, n_z_cells), absolute
    r: np.ndarray
    z: np.ndarray


def solve_transient(
    geometry: CellGeometry,
    params: ThermalParams,
    q_series,
    dt: float,
    t0_field=None,
    grid: FdGrid = FdGrid(),
    probes: dict[str, tuple[float, float]] | None = None,
) -> FdResult:
    """Integrate under piecewise-constant volumetric heat q_0..q_{N-1} (W m^-3).

    Probe and mean series hold N + 1 values, at t = 0, dt, ..., N dt.
    ``t0_field`` is a scalar (uniform) or a cell array; default is ambient.
    """
    op = FdOperator(geometry, params, grid)
    q_series = np.asarray(q_series, dtype=float)
    if dt < grid.dt_solver:
        raise InputError(f"sample period {dt} is shorter than dt_solver {grid.dt_solver}")
    probes = geometry.default_probes() if probes is None else probes
    labels = tuple(probes)
    t_inf = params.t_ambient

    if t0_field is None:
        t0_field = t_inf
    theta0 = np.broadcast_to(np.asarray(t0_field, dtype=float) - t_inf, (len(op.r), len(op.z)))
    a = op.to_modal(np.array(theta0))

    funcs = [op.probe_functional(*probes[k]) for k in labels]
    pr = np.array([op.V_r.T @ wr for wr, _ in funcs])
    pz = np.array([op.V_z.T @ wz for _, wz in funcs])
    vol_total = op.volume.sum()
    mean_r = op.V_r.T @ op.m_r / vol_total
    mean_z = op.V_z.T @ op.m_z

    decay, forced = op.step_factors(dt)
    n = len(q_series)
    out = np.empty((n + 1, len(labels)))
    mean = np.empty(n + 1)

    def record(k, a):
        out[k] = np.einsum("pi,ij,pj->p", pr, a, pz) + t_inf
        mean[k] = mean_r @ a @ mean_z + t_inf
        if not (np.all(np.abs(out[k]) < DIVERGENCE_LIMIT) and abs(mean[k]) < DIVERGENCE_LIMIT):
            raise OracleDivergenceError(f"{SCHEME} diverged at step {k}: |T| exceeded {DIVERGENCE_LIMIT} degC")

    record(0, a)
    for k in range(n):
        a = decay * a + q_series[k] * forced
        record(k + 1, a)

    field = op.to_cells(a) + t_inf
    if not np.all(np.abs(field) < DIVERGENCE_LIMIT):
        raise OracleDivergenceError(f"{SCHEME} diverged: final field exceeded {DIVERGENCE_LIMIT} degC")
    return FdResult(times=dt * np.arange(n + 1), probes=out, mean=mean, labels=labels,
                    final_field=field, r=op.r, z=op.z)


def steady_state(geometry: CellGeometry, params: ThermalParams, q_const: float,
                 grid: FdGrid = FdGrid()) -> np.ndarray:
    """Steady cell field (absolute) from one sparse direct solve."""
    op = FdOperator(geometry, params, grid)
    if q_const == 0.0:
        return np.full((len(op.r), len(op.z)), params.t_ambient)
    if params.adiabatic:
        raise NoSteadyStateError("no steady state: all faces adiabatic with nonzero heat generation")
    S = (sparse.kron(sparse.csr_matrix(op.L_r), sparse.diags(op.m_z))
         + sparse.kron(sparse.diags(op.m_r), sparse.csr_matrix(op.L_z))).tocsc()
    theta = splinalg.spsolve(S, q_const * op.volume.ravel())
    return theta.reshape(len(op.r), len(op.z)) + params.t_ambient


def probe_field(geometry: CellGeometry, params: ThermalParams, field: np.ndarray, r: float, z: float,
                grid: FdGrid = FdGrid()) -> float:
    """Evaluate a cell field at (r, z) with the same boundary reconstruction as the probes."""
    op = FdOperator(geometry, params, grid)
    wr, wz = op.probe_functional(r, z)
    return float(wr @ (field - params.t_ambient) @ wz + params.t_ambient)


def write_field_csv(path, r: np.ndarray, z: np.ndarray, field: np.ndarray) -> None:
    """Grid dump: header row holds z coordinates, first column r coordinates."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r\\z"] + [repr(float(v)) for v in z])
        for ri, row in zip(r, field):
            w.writerow([repr(float(ri))] + [repr(float(v)) for v in row])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    z = np.array([float(v) for v in rows[0][1:]])
    r = np.array([float(row[0]) for row in rows[1:]])
    field = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return r, z, field
