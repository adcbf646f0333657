"""Quadratic map from volume-average temperature to imaginary impedance."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CalibrationError, InputError

MIN_SPREAD = 2.0


@dataclass(frozen=True)
class ImpedanceCalibration:
    """Z'' = a1 + a2 T + a3 T^2 at a fixed excitation frequency (T in degC, Z'' in ohm)."""

    a1: float
    a2: float
    a3: float
    frequency: float = 215.0
    t_range: tuple[float, float] = (5.0, 35.0)
    rms_residual: float | None = None
    warnings: tuple[str, ...] = ()
    provenance: str = ""

    def slope(self, t_mean):
        return self.a2 + 2.0 * self.a3 * np.asarray(t_mean, dtype=float)

    def is_monotonic(self) -> bool:
        lo, hi = self.slope(self.t_range[0]), self.slope(self.t_range[1])
        return bool(lo * hi > 0)

    def in_range(self, t_mean) -> np.ndarray:
        t = np.asarray(t_mean)
        return (t >= self.t_range[0]) & (t <= self.t_range[1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_range"] = list(self.t_range)
        d["warnings"] = list(self.warnings)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ImpedanceCalibration:
        allowed = {"a1", "a2", "a3", "frequency", "t_range", "rms_residual", "warnings", "provenance"}
        unknown = set(d) - allowed
        if unknown:
            raise InputError(f"unknown calibration field(s): {', '.join(sorted(unknown))}")
        try:
            return cls(
                a1=float(d["a1"]), a2=float(d["a2"]), a3=float(d["a3"]),
                frequency=float(d.get("frequency", 215.0)),
                t_range=tuple(float(v) for v in d.get("t_range", (5.0, 35.0))),
                rms_residual=None if d.get("rms_residual") is None else float(d["rms_residual"]),
                warnings=tuple(d.get("warnings", ())),
                provenance=str(d.get("provenance", "")),
            )
        except KeyError as exc:
            raise InputError(f"calibration is missing field {exc.args[0]!r}") from None


# Synthetic coefficients giving Z'' of order 1e-4..1e-3 ohm over 5..35 degC.
SYNTHETIC_CALIBRATION = ImpedanceCalibration(
    a1=1.0e-3, a2=-2.0e-5, a3=2.0e-7, frequency=215.0, t_range=(5.0, 35.0),
    provenance="synthetic default coefficients",
)


def predict_z(cal: ImpedanceCalibration, t_mean):
    t = np.asarray(t_mean, dtype=float)
    z = cal.a1 + cal.a2 * t + cal.a3 * t * t
    return float(z) if z.ndim == 0 else z


def calibrate(pairs, frequency: float = 215.0, provenance: str = "least-squares fit") -> ImpedanceCalibration:
    """Least-squares quadratic through (t_mean, z_meas) pairs.

    Fitting is done in a centred, scaled temperature variable for
    conditioning, then mapped back to raw coefficients.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    if len(pairs) < 3:
        raise CalibrationError(f"need at least 3 (temperature, impedance) pairs, got {len(pairs)}")
    t, z = pairs[:, 0], pairs[:, 1]
    t_lo, t_hi = float(t.min()), float(t.max())
    spread = t_hi - t_lo
    if spread < MIN_SPREAD:
        raise CalibrationError(f"temperature spread {spread:.3g} degC is below the {MIN_SPREAD} degC needed for a stable fit")

    c = 0.5 * (t_lo + t_hi)
    s = 0.5 * spread
    u = (t - c) / s
    V = np.column_stack([np.ones_like(u), u, u * u])
    b, *_ = np.linalg.lstsq(V, z, rcond=None)
    a3 = b[2] / s**2
    a2 = b[1] / s - 2.0 * a3 * c
    a1 = b[0] - b[1] * c / s + a3 * c * c
    rms = float(np.sqrt(np.mean((V @ b - z) ** 2)))

    cal = ImpedanceCalibration(a1=float(a1), a2=float(a2), a3=float(a3), frequency=float(frequency),
                               t_range=(t_lo, t_hi), rms_residual=rms, provenance=provenance)
    if not cal.is_monotonic():
        cal = ImpedanceCalibration(**{**cal.__dict__, "warnings": (
            f"fit is not monotonic over [{t_lo:.3g}, {t_hi:.3g}] degC; temperature is not observable there",)})
    return cal


def synth_measurement(cal: ImpedanceCalibration, t_mean, noise_sigma: float, seed=None):
    """Noisy impedance reading(s); ``seed`` may be an int or a numpy Generator."""
    if noise_sigma < 0:
        raise InputError(f"noise_sigma must be non-negative, got {noise_sigma}")
    z = predict_z(cal, t_mean)
    if noise_sigma == 0:
        return z
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=np.shape(z))
    return float(z + noise) if np.ndim(z) == 0 else z + noise


def save_calibration(cal: ImpedanceCalibration, path) -> None:
    Path(path).write_text(json.dumps(cal.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_calibration(path) -> ImpedanceCalibration:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid calibration file ({exc.msg})") from None
    return ImpedanceCalibration.from_dict(d)
