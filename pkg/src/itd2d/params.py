"""Cell geometry, thermal parameters and the two cooling-configuration presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InputError


@dataclass(frozen=True)
class CellGeometry:
    """Annular jelly-roll domain, lengths in metres."""

    r_in: float = 0.001
    r_out: float = 0.016
    height: float = 0.100

    def __post_init__(self):
        if not (0.0 < self.r_in < self.r_out):
            raise InputError(f"need 0 < r_in < r_out, got r_in={self.r_in}, r_out={self.r_out}")
        if not self.height > 0.0:
            raise InputError(f"height must be positive, got {self.height}")

    def volume(self) -> float:
        return math.pi * (self.r_out**2 - self.r_in**2) * self.height

    def contains(self, r: float, z: float, tol: float = 1e-12) -> bool:
        span = max(self.r_out, self.height)
        return (
            self.r_in - tol * span <= r <= self.r_out + tol * span
            and -tol * span <= z <= self.height + tol * span
        )

    def default_probes(self) -> dict[str, tuple[float, float]]:
        """Thermocouple locations: core mid-height and three points on the can."""
        h = self.height
        return {
            "T1": (self.r_in, 0.5 * h),
            "T2": (self.r_out, 0.0),
            "T3": (self.r_out, 0.5 * h),
            "T4": (self.r_out, h),
        }


@dataclass(frozen=True)
class ThermalParams:
    """Material properties and per-face convection coefficients.

    ``h_left`` acts on the z=0 end, ``h_right`` on the z=H end and ``h_side``
    on the curved surface r=r_out. The mandrel face r=r_in is adiabatic.
    """

    rho: float
    cp: float
    k_r: float
    k_z: float
    h_left: float
    h_right: float
    h_side: float
    t_ambient: float = 8.0

    def __post_init__(self):
        for name in ("rho", "cp", "k_r", "k_z"):
            if not getattr(self, name) > 0.0:
                raise InputError(f"{name} must be strictly positive, got {getattr(self, name)}")
        for name in ("h_left", "h_right", "h_side"):
            if not getattr(self, name) >= 0.0:
                raise InputError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def heat_capacity(self) -> float:
        """Volumetric heat capacity rho*cp."""
        return self.rho * self.cp

    @property
    def adiabatic(self) -> bool:
        return self.h_left == 0.0 and self.h_right == 0.0 and self.h_side == 0.0

    def with_values(self, **values) -> ThermalParams:
        return replace(self, **values)


@dataclass(frozen=True)
class SpectralConfig:
    n_r: int = 5
    n_z: int = 5

    def __post_init__(self):
        if self.n_r < 2 or self.n_z < 2:
            raise InputError(f"mode counts must be >= 2, got n_r={self.n_r}, n_z={self.n_z}")

    @property
    def n_states(self) -> int:
        return self.n_r * self.n_z


REFERENCE_GEOMETRY = CellGeometry(r_in=0.001, r_out=0.016, height=0.100)

# Known material values plus the identified conductivity / convection values
# for the heat-sink (config1) and uninsulated-can (config2) set-ups.
CONFIG1 = ThermalParams(
    rho=2680.0, cp=958.0, k_r=0.35, k_z=19.3,
    h_left=155.0, h_right=23.3, h_side=16.9, t_ambient=8.0,
)
CONFIG2 = ThermalParams(
    rho=2680.0, cp=958.0, k_r=0.35, k_z=19.3,
    h_left=98.2, h_right=7.2, h_side=56.2, t_ambient=8.0,
)

PRESETS = {"config1": CONFIG1, "config2": CONFIG2}

NOMINAL_VOLTAGE = 3.3
NOMINAL_CAPACITY_AH = 4.4
