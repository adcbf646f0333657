"""Strict TOML run configuration.

Every section is optional and falls back to the built-in defaults. Unknown
keys and ill-typed values raise :class:`ConfigError` naming the dotted key.
Relative paths resolve against the config file's directory. See
``docs/config.md`` for the full schema.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .drivecycle import CellElectrical, OcvTable
from .errors import ConfigError, InputError
from .estimation import MODES, EstimatorConfig, ekf_config, kf_config
from .fdm import FdGrid
from .impedance import SYNTHETIC_CALIBRATION, ImpedanceCalibration
from .params import PRESETS, REFERENCE_GEOMETRY, CellGeometry, SpectralConfig, ThermalParams
from .sysid import DEFAULT_BOUNDS, FREE_PARAMS

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

_NUM = (int, float)

SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {"r_in": _NUM, "r_out": _NUM, "height": _NUM},
    "thermal": {"preset": (str,), "rho": _NUM, "cp": _NUM, "k_r": _NUM, "k_z": _NUM, "h_left": _NUM,
                "h_right": _NUM, "h_side": _NUM, "t_ambient": _NUM},
    "spectral": {"n_r": (int,), "n_z": (int,)},
    "electrical": {"capacity": _NUM, "soc0": _NUM, "r0": _NUM, "ocv_soc": (list,), "ocv_voltage": (list,)},
    "estimator": {"mode": (str,), "dt": _NUM, "meas_period": _NUM, "p0_std": _NUM, "t0_estimate": _NUM,
                  "sigma_n_z": _NUM, "beta_v_z": _NUM, "sigma_n_t3": _NUM, "beta_v_t3": _NUM},
    "impedance": {"a1": _NUM, "a2": _NUM, "a3": _NUM, "frequency": _NUM, "noise_sigma": _NUM},
    "twin": {"duration": _NUM, "i_max": _NUM, "t_true0": _NUM, "tc_noise": _NUM, "converge_after": _NUM,
             "fd_n_r": (int,), "fd_n_z": (int,), "fd_dt": _NUM, "calibrate": (bool,)},
    "identify": {"free": (list,), "bounds": (dict,), "n_starts": (int,), "n_polish": (int,),
                 "t_initial": _NUM},
    "output": {"grid_r": (int,), "grid_z": (int,)},
    "paths": {"cycle": (str,), "calibration": (str,), "out": (str,)},
}
TOP_LEVEL = {"seed": (int,)}


@dataclass(frozen=True)
class IdentifySettings:
    free: tuple[str, ...] = FREE_PARAMS
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    n_starts: int = 16
    n_polish: int = 4
    t_initial: float | None = None


@dataclass(frozen=True)
class TwinConfig:
    duration: float = 2400.0
    i_max: float = 50.0
    t_true0: float | None = None
    tc_noise: float = 5e-4
    converge_after: float = 300.0
    fd_grid: FdGrid = FdGrid(200, 200, 0.1)
    calibrate: bool = True


@dataclass(frozen=True)
class RunConfig:
    geometry: CellGeometry = REFERENCE_GEOMETRY
    thermal: ThermalParams = PRESETS["config1"]
    spectral: SpectralConfig = SpectralConfig()
    ocv: OcvTable = OcvTable()
    cell: CellElectrical = CellElectrical()
    r0: float = 0.020
    mode: str = "ekf_z"
    ekf: EstimatorConfig = field(default_factory=ekf_config)
    kf: EstimatorConfig = field(default_factory=kf_config)
    t0_estimate: float | None = None
    impedance: ImpedanceCalibration = SYNTHETIC_CALIBRATION
    z_noise: float = 3e-5
    twin: TwinConfig = TwinConfig()
    identify: IdentifySettings = IdentifySettings()
    grid: tuple[int, int] = (100, 100)
    cycle_path: Path | None = None
    calibration_path: Path | None = None
    out_dir: Path | None = None
    seed: int = 0
    source: Path | None = None

    def estimator_config(self, mode: str | None = None) -> EstimatorConfig:
        return self.kf if (mode or self.mode) == "kf_t3" else self.ekf


def _type_ok(value, types) -> bool:
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def _check_schema(doc: dict) -> None:
    for key, value in doc.items():
        if key in TOP_LEVEL:
            if not _type_ok(value, TOP_LEVEL[key]):
                raise ConfigError(f"{key}: expected {TOP_LEVEL[key][0].__name__}, got {type(value).__name__}")
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}; allowed sections: {', '.join(SCHEMA)}")
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a [{key}] table")
        for sub, v in value.items():
            allowed = SCHEMA[key]
            if sub not in allowed:
                raise ConfigError(f"unknown key {key}.{sub}; allowed: {', '.join(allowed)}")
            if not _type_ok(v, allowed[sub]):
                raise ConfigError(f"{key}.{sub}: expected {allowed[sub][0].__name__}, got {type(v).__name__}")


def _floats(values, where: str) -> tuple[float, ...]:
    if not all(_type_ok(v, _NUM) for v in values):
        raise ConfigError(f"{where}: expected a list of numbers")
    return tuple(float(v) for v in values)


def _build(doc: dict, base: Path | None) -> RunConfig:
    sec = lambda name: doc.get(name, {})  # noqa: E731
    where = ""
    try:
        where = "geometry"
        g = sec("geometry")
        geometry = CellGeometry(**{k: float(v) for k, v in g.items()}) if g else REFERENCE_GEOMETRY

        where = "thermal"
        th = dict(sec("thermal"))
        preset = th.pop("preset", "config1")
        if preset not in PRESETS:
            raise ConfigError(f"thermal.preset: unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        thermal = PRESETS[preset].with_values(**{k: float(v) for k, v in th.items()})

        where = "spectral"
        spectral = SpectralConfig(**sec("spectral"))

        where = "electrical"
        el = sec("electrical")
        if ("ocv_soc" in el) != ("ocv_voltage" in el):
            raise ConfigError("electrical: ocv_soc and ocv_voltage must be given together")
        ocv = OcvTable(_floats(el["ocv_soc"], "electrical.ocv_soc"),
                       _floats(el["ocv_voltage"], "electrical.ocv_voltage")) if "ocv_soc" in el else OcvTable()
        cell = CellElectrical(float(el.get("capacity", CellElectrical.capacity)),
                              float(el.get("soc0", CellElectrical.soc0)))
        r0 = float(el.get("r0", 0.020))

        where = "estimator"
        es = sec("estimator")
        mode = es.get("mode", "ekf_z")
        if mode not in MODES:
            raise ConfigError(f"estimator.mode: unknown mode {mode!r}; choose from {', '.join(MODES)}")
        common = {k: float(es[k]) for k in ("dt", "meas_period", "p0_std") if k in es}
        ekf = ekf_config(float(es.get("sigma_n_z", 3e-5)), float(es.get("beta_v_z", 5e-3)), **common)
        kf = kf_config(float(es.get("sigma_n_t3", 5e-4)), float(es.get("beta_v_t3", 0.05)), **common)
        t0_estimate = float(es["t0_estimate"]) if "t0_estimate" in es else None

        where = "impedance"
        im = sec("impedance")
        d = SYNTHETIC_CALIBRATION
        impedance = ImpedanceCalibration(
            a1=float(im.get("a1", d.a1)), a2=float(im.get("a2", d.a2)), a3=float(im.get("a3", d.a3)),
            frequency=float(im.get("frequency", d.frequency)), t_range=d.t_range,
            provenance="config impedance section" if im else d.provenance)
        z_noise = float(im.get("noise_sigma", 3e-5))
        if z_noise < 0:
            raise ConfigError("impedance.noise_sigma must be non-negative")

        where = "twin"
        tw = sec("twin")
        dt_default = TwinConfig()
        twin = TwinConfig(
            duration=float(tw.get("duration", dt_default.duration)),
            i_max=float(tw.get("i_max", dt_default.i_max)),
            t_true0=float(tw["t_true0"]) if "t_true0" in tw else None,
            tc_noise=float(tw.get("tc_noise", dt_default.tc_noise)),
            converge_after=float(tw.get("converge_after", dt_default.converge_after)),
            fd_grid=FdGrid(int(tw.get("fd_n_r", 200)), int(tw.get("fd_n_z", 200)), float(tw.get("fd_dt", 0.1))),
            calibrate=bool(tw.get("calibrate", True)),
        )
        if twin.tc_noise < 0:
            raise ConfigError("twin.tc_noise must be non-negative")

        where = "identify"
        idn = sec("identify")
        free = tuple(idn.get("free", FREE_PARAMS))
        bad = [p for p in free if p not in FREE_PARAMS]
        if bad or not free:
            raise ConfigError(f"identify.free: expected a non-empty subset of {', '.join(FREE_PARAMS)}")
        bounds = dict(DEFAULT_BOUNDS)
        for p, b in idn.get("bounds", {}).items():
            if p not in FREE_PARAMS:
                raise ConfigError(f"unknown key identify.bounds.{p}; allowed: {', '.join(FREE_PARAMS)}")
            if not isinstance(b, list) or len(b) != 2:
                raise ConfigError(f"identify.bounds.{p}: expected [lo, hi]")
            lo, hi = _floats(b, f"identify.bounds.{p}")
            if not 0 < lo < hi:
                raise ConfigError(f"identify.bounds.{p}: need 0 < lo < hi")
            bounds[p] = (lo, hi)
        identify = IdentifySettings(free=free, bounds=bounds, n_starts=int(idn.get("n_starts", 16)),
                                    n_polish=int(idn.get("n_polish", 4)),
                                    t_initial=float(idn["t_initial"]) if "t_initial" in idn else None)
        if identify.n_starts < 1 or not 1 <= identify.n_polish <= identify.n_starts:
            raise ConfigError("identify: need n_starts >= 1 and 1 <= n_polish <= n_starts")

        where = "output"
        out = sec("output")
        grid = (int(out.get("grid_r", 100)), int(out.get("grid_z", 100)))
        if min(grid) < 2:
            raise ConfigError("output.grid_r and output.grid_z must be at least 2")
    except ConfigError:
        raise
    except InputError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None

    paths = sec("paths")
    resolve = lambda p: (Path(p) if base is None or Path(p).is_absolute() else base / p)  # noqa: E731
    return RunConfig(
        geometry=geometry, thermal=thermal, spectral=spectral, ocv=ocv, cell=cell, r0=r0, mode=mode,
        ekf=ekf, kf=kf, t0_estimate=t0_estimate, impedance=impedance, z_noise=z_noise, twin=twin,
        identify=identify, grid=grid,
        cycle_path=resolve(paths["cycle"]) if "cycle" in paths else None,
        calibration_path=resolve(paths["calibration"]) if "calibration" in paths else None,
        out_dir=resolve(paths["out"]) if "out" in paths else None,
        seed=int(doc.get("seed", 0)),
    )


def parse_config(text: str, base: Path | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    _check_schema(doc)
    return _build(doc, base)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = parse_config(path.read_text(encoding="utf-8"), base=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(**{**cfg.__dict__, "source": path})


def check_files(*paths) -> None:
    """Fail fast if any referenced input file is missing."""
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"referenced file {p} does not exist")
