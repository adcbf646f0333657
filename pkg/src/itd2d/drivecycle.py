"""Drive-cycle data: CSV I/O, coulomb counting, ohmic heat and a synthetic HEV-style profile."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, MissingColumnError
from .params import NOMINAL_CAPACITY_AH, NOMINAL_VOLTAGE, CellGeometry

REQUIRED_COLUMNS = ("t", "current", "voltage")
OPTIONAL_COLUMNS = ("T1", "T2", "T3", "T4", "z_imag", "t_chamber")


@dataclass(frozen=True)
class DriveCycleSample:
    t: float
    current: float
    voltage: float
    T1: float | None = None
    T2: float | None = None
    T3: float | None = None
    T4: float | None = None
    z_imag: float | None = None
    t_chamber: float | None = None


@dataclass(frozen=True)
class OcvTable:
    soc_points: tuple[float, ...] = (0.0, 1.0)
    ocv_points: tuple[float, ...] = (NOMINAL_VOLTAGE, NOMINAL_VOLTAGE)

    def __post_init__(self):
        s, v = np.asarray(self.soc_points), np.asarray(self.ocv_points)
        if len(s) != len(v) or len(s) < 1:
            raise InputError("OCV table needs matching, non-empty soc and voltage lists")
        if np.any(np.diff(s) <= 0):
            raise InputError("OCV table soc points must be strictly increasing")
        if np.any(np.diff(v) < 0):
            raise InputError("OCV table voltages must be non-decreasing")
        if s[0] < 0 or s[-1] > 1:
            raise InputError("OCV table soc points must lie in [0, 1]")

    def __call__(self, soc):
        # np.interp clamps to the end values
        return np.interp(soc, self.soc_points, self.ocv_points)


@dataclass(frozen=True)
class CellElectrical:
    capacity: float = NOMINAL_CAPACITY_AH
    soc0: float = 0.5

    def __post_init__(self):
        if not self.capacity > 0:
            raise InputError(f"capacity must be positive, got {self.capacity}")
        if not 0.0 <= self.soc0 <= 1.0:
            raise InputError(f"soc0 must lie in [0, 1], got {self.soc0}")


@dataclass(eq=False)
class DriveCycle:
    """Column store of a drive cycle. Missing optional values are NaN."""

    t: np.ndarray
    current: np.ndarray
    voltage: np.ndarray
    optional: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.current = np.asarray(self.current, dtype=float)
        self.voltage = np.asarray(self.voltage, dtype=float)
        n = len(self.t)
        if len(self.current) != n or len(self.voltage) != n:
            raise InputError("t, current and voltage must have equal length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise InputError("drive-cycle time stamps must be strictly increasing")
        for name, col in list(self.optional.items()):
            if name not in OPTIONAL_COLUMNS:
                raise InputError(f"unknown drive-cycle column {name!r}")
            col = np.asarray(col, dtype=float)
            if len(col) != n:
                raise InputError(f"column {name} has {len(col)} values, expected {n}")
            self.optional[name] = col

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for k in range(len(self)):
            extra = {name: (None if math.isnan(col[k]) else float(col[k])) for name, col in self.optional.items()}
            yield DriveCycleSample(float(self.t[k]), float(self.current[k]), float(self.voltage[k]), **extra)

    def __eq__(self, other):
        if not isinstance(other, DriveCycle):
            return NotImplemented
        same = lambda a, b: np.array_equal(a, b, equal_nan=True)  # noqa: E731
        return (same(self.t, other.t) and same(self.current, other.current)
                and same(self.voltage, other.voltage)
                and self.optional.keys() == other.optional.keys()
                and all(same(v, other.optional[k]) for k, v in self.optional.items()))

    @classmethod
    def from_samples(cls, samples) -> DriveCycle:
        samples = list(samples)
        present = [c for c in OPTIONAL_COLUMNS if any(getattr(s, c) is not None for s in samples)]
        opt = {c: np.array([np.nan if getattr(s, c) is None else getattr(s, c) for s in samples]) for c in present}
        return cls(np.array([s.t for s in samples]), np.array([s.current for s in samples]),
                   np.array([s.voltage for s in samples]), opt)

    @property
    def dt(self) -> float:
        """Nominal sample period; the cycle must be uniformly sampled."""
        if len(self) < 2:
            return 1.0
        steps = np.diff(self.t)
        if np.ptp(steps) > 1e-6 * steps.mean():
            raise InputError("drive cycle is not uniformly sampled")
        return float(steps.mean())

    def has(self, name: str) -> bool:
        return name in self.optional and bool(np.any(~np.isnan(self.optional[name])))

    def column(self, name: str) -> np.ndarray:
        if name in REQUIRED_COLUMNS:
            return getattr(self, name)
        if not self.has(name):
            raise MissingColumnError(f"drive cycle has no {name!r} data")
        return self.optional[name]

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in REQUIRED_COLUMNS and not self.has(n)]
        if missing:
            raise MissingColumnError(f"drive cycle is missing required column(s): {', '.join(missing)}")

    def with_columns(self, **cols) -> DriveCycle:
        opt = dict(self.optional)
        opt.update({k: np.asarray(v, dtype=float) for k, v in cols.items()})
        return DriveCycle(self.t.copy(), self.current.copy(), self.voltage.copy(), opt)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_cycle_csv(cycle: DriveCycle, path) -> None:
    names = [c for c in OPTIONAL_COLUMNS if c in cycle.optional]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REQUIRED_COLUMNS) + names)
        cols = [cycle.t, cycle.current, cycle.voltage] + [cycle.optional[c] for c in names]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_cycle_csv(path) -> DriveCycle:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty drive-cycle file") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: header lacks required column(s) {', '.join(missing)}")
        unknown = [c for c in header if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
        if unknown:
            raise InputError(f"{path}: unknown column(s) {', '.join(unknown)}")
        data = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, v in zip(header, row):
                v = v.strip()
                if v == "":
                    if h in REQUIRED_COLUMNS:
                        raise InputError(f"{path}:{lineno}: empty value in required column {h}")
                    data[h].append(math.nan)
                else:
                    try:
                        data[h].append(float(v))
                    except ValueError:
                        raise InputError(f"{path}:{lineno}: cannot parse {v!r} in column {h}") from None
    opt = {h: np.array(data[h]) for h in header if h in OPTIONAL_COLUMNS}
    return DriveCycle(np.array(data["t"]), np.array(data["current"]), np.array(data["voltage"]), opt)


def heat_power(sample: DriveCycleSample, ocv: float) -> float:
    """Ohmic heat Q = I (V - U_ocv), in W. Negative values are passed through."""
    return sample.current * (sample.voltage - ocv)


def volumetric_heat(Q, geometry: CellGeometry):
    """Uniform volumetric heat generation q = Q / V_b (scalar or ndarray)."""
    return Q / geometry.volume()


def soc_update(soc: float, current: float, dt: float, capacity: float) -> float:
    return min(max(soc + current * dt / (3600.0 * capacity), 0.0), 1.0)


@dataclass(frozen=True)
class HeatProfile:
    power: np.ndarray  # W
    q: np.ndarray  # W m^-3
    soc: np.ndarray
    negative_fraction: float


def cycle_heat(cycle: DriveCycle, geometry: CellGeometry, ocv: OcvTable = OcvTable(),
               cell: CellElectrical = CellElectrical()) -> HeatProfile:
    """Heat series for a cycle; sample k uses only sample k and the SoC it carries in."""
    n = len(cycle)
    soc = np.empty(n)
    s = cell.soc0
    dt = cycle.dt
    for k in range(n):
        soc[k] = s
        s = soc_update(s, cycle.current[k], dt, cell.capacity)
    power = cycle.current * (cycle.voltage - ocv(soc))
    neg = float(np.mean(power < 0)) if n else 0.0
    return HeatProfile(power=power, q=power / geometry.volume(), soc=soc, negative_fraction=neg)


def synth_hev_cycle(
    seed: int,
    duration: float,
    i_max: float = 50.0,
    r0: float = 0.020,
    dt: float = 1.0,
    ocv: OcvTable = OcvTable(),
    cell: CellElectrical = CellElectrical(),
    pause_period: float = 24.0,
    pause_length: float = 4.0,
) -> DriveCycle:
    """Seeded stand-in for a scaled HEV current profile.

    Bursts of short current pulses alternate with rests. Each pulse takes the
    sign that drives the accumulated charge back toward zero, so the charge
    excursion never exceeds one pulse (i_max * 8 s). The last ``pause_length``
    seconds of every ``pause_period`` carry zero current, leaving room for an
    impedance measurement at each multiple of the period.
    """
    if duration < 60:
        raise InputError(f"duration must be at least 60 s, got {duration}")
    rng = np.random.default_rng(seed)
    n = int(round(duration / dt))
    t = dt * np.arange(n)
    paused = np.zeros(n, dtype=bool)
    if pause_period > 0 and pause_length > 0:
        paused = np.mod(t, pause_period) >= pause_period - pause_length - 1e-9
    current = np.zeros(n)
    k = 0
    charge = 0.0
    while k < n:
        burst_end = min(n, k + int(rng.integers(60, 181)))
        while k < burst_end:
            stop = min(burst_end, k + int(rng.integers(2, 9)))
            amp = i_max * rng.uniform(0.1, 1.0) ** 2
            sign = -1.0 if charge > 0 else 1.0
            active = ~paused[k:stop]
            current[k:stop][active] = sign * amp
            charge += sign * amp * dt * int(active.sum())
            k = stop
        k = min(n, k + int(rng.integers(10, 61)))

    soc = np.empty(n)
    s = cell.soc0
    for i in range(n):
        soc[i] = s
        s = soc_update(s, current[i], dt, cell.capacity)
    voltage = ocv(soc) + current * r0
    return DriveCycle(t, current, voltage)
