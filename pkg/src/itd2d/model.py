"""Low-order spectral-Galerkin model of the 2-D (r, z) cell heat equation.

The temperature deviation from a reference temperature is expanded in a
tensor product of Legendre polynomials,

    T(r, z, t) - T_ref = sum_ij x_ij(t) P_i(xi(r)) P_j(eta(z)),

with xi, eta the affine maps of [r_in, r_out] and [0, H] onto [-1, 1]. The
Robin conditions enter through the surface terms of the weak form, so no
basis function has to satisfy a boundary condition. Testing with every basis
function and integrating with the cylindrical weight r gives

    E dx/dt = A x + B u,    u = [q(t), 1],

where the second input column carries the ambient forcing h (T_inf - T_ref)
on the exposed faces. With the default ``T_ref = T_inf`` that column is zero
and q = 0 means decay to ambient. The common factor 2*pi of all volume and
surface integrals is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import linalg

from .errors import DomainError, InputError, ModelError
from .params import CellGeometry, SpectralConfig, ThermalParams

PROBE_LABELS = ("T1", "T2", "T3", "T4")


@dataclass(frozen=True)
class TensorLegendreBasis:
    """Tensor-product Legendre basis on the mapped annulus.

    State index of mode (i, j) is ``i * n_z + j``; mode (0, 0) is the constant.
    """

    n_r: int
    n_z: int
    r_in: float
    r_out: float
    height: float

    @property
    def r_center(self) -> float:
        return 0.5 * (self.r_in + self.r_out)

    @property
    def r_half(self) -> float:
        return 0.5 * (self.r_out - self.r_in)

    def xi(self, r):
        return (np.asarray(r, dtype=float) - self.r_center) / self.r_half

    def eta(self, z):
        return 2.0 * np.asarray(z, dtype=float) / self.height - 1.0

    def radial_values(self, r) -> np.ndarray:
        """Matrix of P_i(xi(r)), shape (len(r), n_r)."""
        return npleg.legvander(np.atleast_1d(self.xi(r)), self.n_r - 1)

    def axial_values(self, z) -> np.ndarray:
        return npleg.legvander(np.atleast_1d(self.eta(z)), self.n_z - 1)

    def row(self, r: float, z: float) -> np.ndarray:
        return np.kron(self.radial_values(r)[0], self.axial_values(z)[0])

    @property
    def constant_index(self) -> int:
        return 0


@dataclass(frozen=True)
class StateSpaceModel:
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    basis: TensorLegendreBasis
    geometry: CellGeometry
    params: ThermalParams
    t_ref: float
    load: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.E.shape[0]

    def uniform_state(self, temperature: float) -> np.ndarray:
        """State vector of a spatially uniform field at ``temperature``."""
        x = np.zeros(self.n_states)
        x[self.basis.constant_index] = temperature - self.t_ref
        return x

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(_cho(self.E), self.A @ x + self.B @ u)


@dataclass(frozen=True)
class DiscreteStateSpace:
    A_bar: np.ndarray
    B_bar: np.ndarray
    dt: float

    def __post_init__(self):
        if not self.dt > 0.0:
            raise InputError(f"dt must be positive, got {self.dt}")

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A_bar @ x + self.B_bar @ u


@dataclass(frozen=True)
class OutputMap:
    C: np.ndarray
    offset: np.ndarray
    labels: tuple[str, ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Outputs for one state (n,) or a stack of states (k, n)."""
        return np.asarray(x) @ self.C.T + self.offset

    def row(self, label: str) -> tuple[np.ndarray, float]:
        i = self.labels.index(label)
        return self.C[i], float(self.offset[i])


def _cho(E):
    return linalg.cho_factor(E)


@lru_cache(maxsize=64)
def _galerkin_blocks(geometry: CellGeometry, config: SpectralConfig):
    """Parameter-free 1-D Galerkin integrals, exact by Gauss-Legendre quadrature."""
    basis = TensorLegendreBasis(config.n_r, config.n_z, geometry.r_in, geometry.r_out, geometry.height)
    rc, rh = basis.r_center, basis.r_half
    hz = 0.5 * geometry.height

    # integrands are polynomials of degree <= 2*(n-1) + 1
    nq_r = 2 * config.n_r + 2
    nq_z = 2 * config.n_z + 2
    xq, wq = npleg.leggauss(nq_r)
    eq, vq = npleg.leggauss(nq_z)

    Pr = npleg.legvander(xq, config.n_r - 1)
    dPr = np.column_stack([npleg.legval(xq, npleg.legder(np.eye(config.n_r)[i])) for i in range(config.n_r)])
    rq = rc + rh * xq
    Pz = npleg.legvander(eq, config.n_z - 1)
    dPz = np.column_stack([npleg.legval(eq, npleg.legder(np.eye(config.n_z)[j])) for j in range(config.n_z)])

    mass_r = rh * (Pr * (wq * rq)[:, None]).T @ Pr
    stiff_r = (dPr * (wq * rq)[:, None]).T @ dPr / rh
    load_r = rh * (wq * rq) @ Pr
    end_r = npleg.legvander(np.array([1.0]), config.n_r - 1)[0]
    outer_r = geometry.r_out * np.outer(end_r, end_r)

    mass_z = hz * (Pz * vq[:, None]).T @ Pz
    stiff_z = (dPz * vq[:, None]).T @ dPz / hz
    load_z = hz * vq @ Pz
    ends = npleg.legvander(np.array([-1.0, 1.0]), config.n_z - 1)
    left_z = np.outer(ends[0], ends[0])
    right_z = np.outer(ends[1], ends[1])

    blocks = {
        "mass": np.kron(mass_r, mass_z),
        "stiff_r": np.kron(stiff_r, mass_z),
        "stiff_z": np.kron(mass_r, stiff_z),
        "robin_side": np.kron(outer_r, mass_z),
        "robin_left": np.kron(mass_r, left_z),
        "robin_right": np.kron(mass_r, right_z),
        "load": np.kron(load_r, load_z),
    }
    for v in blocks.values():
        v.setflags(write=False)
    return basis, blocks


def assemble_model(
    geometry: CellGeometry,
    params: ThermalParams,
    config: SpectralConfig = SpectralConfig(),
    t_ref: float | None = None,
) -> StateSpaceModel:
    """Assemble (E, A, B) for the given cell, material and mode counts.

    States are the deviation ``T - t_ref``; ``t_ref`` defaults to the ambient
    temperature.
    """
    basis, b = _galerkin_blocks(geometry, config)
    t_ref = params.t_ambient if t_ref is None else float(t_ref)

    E = params.heat_capacity * b["mass"]
    robin = params.h_side * b["robin_side"] + params.h_left * b["robin_left"] + params.h_right * b["robin_right"]
    A = -(params.k_r * b["stiff_r"] + params.k_z * b["stiff_z"] + robin)
    A = 0.5 * (A + A.T)
    E = 0.5 * (E + E.T)

    try:
        linalg.cholesky(E)
    except linalg.LinAlgError as exc:
        raise ModelError("assembled mass matrix is not positive definite") from exc

    B = np.column_stack([b["load"], robin[:, basis.constant_index] * (params.t_ambient - t_ref)])
    return StateSpaceModel(E=E, A=A, B=B, basis=basis, geometry=geometry, params=params,
                           t_ref=t_ref, load=b["load"])


def system_matrix(model: StateSpaceModel) -> tuple[np.ndarray, np.ndarray]:
    """Return (E^-1 A, E^-1 B)."""
    cho = _cho(model.E)
    return linalg.cho_solve(cho, model.A), linalg.cho_solve(cho, model.B)


def modal_decomposition(model: StateSpaceModel) -> tuple[np.ndarray, np.ndarray]:
    """Decay rates and E-orthonormal modes: -A V = E V diag(rates), V^T E V = I."""
    rates, V = linalg.eigh(-model.A, model.E)
    return rates, V


def discretize(model: StateSpaceModel, dt: float) -> DiscreteStateSpace:
    """Zero-order-hold discretization.

    A_bar = exp(F dt) and B_bar = int_0^dt exp(F s) ds G with F = E^-1 A and
    G = E^-1 B, both read off one block-matrix exponential. For invertible F
    this equals F^-1 (A_bar - I) G; the block form also covers the singular
    adiabatic case without inverting F.
    """
    if not dt > 0.0:
        raise InputError(f"dt must be positive, got {dt}")
    F, G = system_matrix(model)
    n, m = G.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = F * dt
    block[:n, n:] = G * dt
    ex = linalg.expm(block)
    return DiscreteStateSpace(A_bar=ex[:n, :n], B_bar=ex[:n, n:], dt=float(dt))


def inputs(q: np.ndarray) -> np.ndarray:
    """Stack heat-generation samples into the (N, 2) input sequence [q, 1]."""
    q = np.asarray(q, dtype=float)
    return np.column_stack([q, np.ones_like(q)])


def simulate(dss: DiscreteStateSpace, q: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """States x_0..x_N under piecewise-constant heat input q_0..q_{N-1}.

    Returns an array of shape (N + 1, n).
    """
    u = inputs(q)
    x = np.empty((len(u) + 1, len(x0)))
    x[0] = x0
    for k in range(len(u)):
        x[k + 1] = dss.A_bar @ x[k] + dss.B_bar @ u[k]
    return x


def mean_temperature_row(model: StateSpaceModel) -> tuple[np.ndarray, float]:
    """Row c and offset with c @ x + offset equal to the volume-average temperature."""
    g = model.geometry
    weight = 0.5 * (g.r_out**2 - g.r_in**2) * g.height
    return model.load / weight, model.t_ref


def output_map_for_points(
    model: StateSpaceModel,
    points: dict[str, tuple[float, float]] | list[tuple[float, float]] | None = None,
) -> OutputMap:
    """Point-evaluation rows; defaults to the four thermocouple locations."""
    if points is None:
        points = model.geometry.default_probes()
    if isinstance(points, dict):
        labels, coords = tuple(points), list(points.values())
    else:
        coords = list(points)
        labels = tuple(f"P{i + 1}" for i in range(len(coords)))
    rows = []
    for label, (r, z) in zip(labels, coords):
        if not model.geometry.contains(r, z):
            raise DomainError(f"point {label}=({r}, {z}) lies outside [{model.geometry.r_in}, "
                              f"{model.geometry.r_out}] x [0, {model.geometry.height}]")
        rows.append(model.basis.row(r, z))
    C = np.array(rows).reshape(len(rows), model.n_states)
    return OutputMap(C=C, offset=np.full(len(rows), model.t_ref), labels=labels)


def grid_coordinates(geometry: CellGeometry, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    n_r, n_z = shape
    if n_r < 2 or n_z < 2:
        raise InputError(f"grid dimensions must be >= 2, got {shape}")
    return np.linspace(geometry.r_in, geometry.r_out, n_r), np.linspace(0.0, geometry.height, n_z)


def reconstruct_field(model: StateSpaceModel, state: np.ndarray, grid: tuple[int, int] = (100, 100)) -> np.ndarray:
    """Absolute temperature on a tensor grid over [r_in, r_out] x [0, H], indexed [i_r, i_z]."""
    r, z = grid_coordinates(model.geometry, grid)
    return evaluate_field(model, state, r, z)


def evaluate_field(model: StateSpaceModel, state: np.ndarray, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    basis = model.basis
    coeff = np.asarray(state, dtype=float).reshape(basis.n_r, basis.n_z)
    return basis.radial_values(r) @ coeff @ basis.axial_values(z).T + model.t_ref


def project_field(model: StateSpaceModel, func) -> np.ndarray:
    """Weighted L2 projection of an absolute-temperature function T(r, z) onto the basis."""
    basis = model.basis
    g = model.geometry
    nq = 2 * max(basis.n_r, basis.n_z) + 8
    xq, wq = npleg.leggauss(nq)
    r = basis.r_center + basis.r_half * xq
    z = 0.5 * g.height * (xq + 1.0)
    R, Z = np.meshgrid(r, z, indexing="ij")
    vals = np.asarray(func(R, Z), dtype=float) - model.t_ref
    w = np.outer(wq * r * basis.r_half, wq * 0.5 * g.height)
    Vr, Vz = basis.radial_values(r), basis.axial_values(z)
    rhs = (Vr.T @ (vals * w) @ Vz).ravel()
    mass = model.E / model.params.heat_capacity
    return linalg.solve(mass, rhs, assume_a="pos")
