"""Physical parameters of a resonator behind a tunable coupler, and the
coupler scattering coefficients derived from the coupling rate.

All quantities are SI (seconds, rad/s, ohms, volts). Every routine also works
in a dimensionless frame where ``kappa_on = 1``; see :meth:`SystemParams.scaled`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

# Device values: 6.55 GHz quarter-wave resonator, 50 ohm line, 80 ohm resonator,
# open coupling 1/(50 ns), intrinsic T1 of 3 us.
DEVICE_FREQUENCY_HZ = 6.55e9
DEVICE_KAPPA_ON = 1.0 / 50e-9
DEVICE_KAPPA_I = 1.0 / 3e-6
DEVICE_R1 = 50.0
DEVICE_R2 = 80.0

MAX_KAPPA_TAU_RT = 0.1


@dataclass(frozen=True)
class SystemParams:
    """Resonator and coupler constants.

    ``tau_rt`` is the ratio of stored energy to travelling-wave power; it
    defaults to ``pi / omega`` (quarter-wave resonator).
    """

    omega: float
    r1_impedance: float = DEVICE_R1
    r2_impedance: float = DEVICE_R2
    kappa_on: float = DEVICE_KAPPA_ON
    kappa_i: float = 0.0
    tau_rt: float | None = None

    def __post_init__(self):
        if self.tau_rt is None:
            object.__setattr__(self, "tau_rt", math.pi / self.omega if self.omega > 0 else float("nan"))
        for name in ("omega", "r1_impedance", "r2_impedance", "tau_rt", "kappa_on"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (self.kappa_i >= 0 and math.isfinite(self.kappa_i)):
            raise ValueError(f"kappa_i must be >= 0, got {self.kappa_i!r}")
        if self.kappa_on * self.tau_rt >= MAX_KAPPA_TAU_RT:
            raise ValueError(
                f"kappa_on * tau_rt = {self.kappa_on * self.tau_rt:.3g} is outside the "
                f"weak-coupling regime (< {MAX_KAPPA_TAU_RT})"
            )

    @property
    def t1_time(self) -> float:
        """Intrinsic energy decay time ``1/kappa_i`` (inf when lossless)."""
        return math.inf if self.kappa_i == 0 else 1.0 / self.kappa_i

    @classmethod
    def device(cls, lossless: bool = False) -> "SystemParams":
        """Parameters of the measured device."""
        return cls(
            omega=2 * math.pi * DEVICE_FREQUENCY_HZ,
            kappa_on=DEVICE_KAPPA_ON,
            kappa_i=0.0 if lossless else DEVICE_KAPPA_I,
        )

    def scaled(self) -> "SystemParams":
        """Same physics in units where ``kappa_on = 1`` (times in 1/kappa_on)."""
        k = self.kappa_on
        return replace(self, omega=self.omega / k, kappa_on=1.0, kappa_i=self.kappa_i / k, tau_rt=self.tau_rt * k)

    def with_kappa(self, kappa_on: float) -> "SystemParams":
        return replace(self, kappa_on=kappa_on)

    @classmethod
    def from_dict(cls, cfg: dict) -> "SystemParams":
        """Build from a config mapping.

        Frequency is given either as ``omega_rad_s`` or as ``frequency_hz``
        (converted with 2*pi); supplying both is an error. ``t1_time`` may be
        given instead of ``kappa_i``.
        """
        cfg = dict(cfg)
        if "omega_rad_s" in cfg and "frequency_hz" in cfg:
            raise ValueError("give either omega_rad_s or frequency_hz, not both")
        if "omega_rad_s" in cfg:
            omega = float(cfg.pop("omega_rad_s"))
        elif "frequency_hz" in cfg:
            omega = 2 * math.pi * float(cfg.pop("frequency_hz"))
        elif "omega" in cfg:
            omega = float(cfg.pop("omega"))
        else:
            omega = 2 * math.pi * DEVICE_FREQUENCY_HZ
        if "t1_time" in cfg:
            if "kappa_i" in cfg:
                raise ValueError("give either kappa_i or t1_time, not both")
            t1 = float(cfg.pop("t1_time"))
            cfg["kappa_i"] = 0.0 if math.isinf(t1) else 1.0 / t1
        known = {"r1_impedance", "r2_impedance", "kappa_on", "kappa_i", "tau_rt"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown system keys: {sorted(unknown)}")
        return cls(omega=omega, **{k: float(v) for k, v in cfg.items()})

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"omega_rad_s": self.omega, **{k: v for k, v in asdict(self).items() if k != "omega"}}


@dataclass(frozen=True)
class CouplerCoefficients:
    t1: complex
    t2: complex
    rr1: complex
    rr2: complex
    r_mag: float

    @property
    def drive_coupling(self) -> complex:
        """``t1 * conj(r2) / |r|``, the factor multiplying the drive in the field equation."""
        return self.t1 * np.conj(self.rr2) / self.r_mag


def coefficient_arrays(sys: SystemParams, kappa, phase_t1: float = 0.0):
    """Vectorised coefficients ``(t1, t2, r1, r2, |r|)`` for coupling rate(s) ``kappa``.

    The convention fixes ``r2`` real and positive; ``r1`` then follows from
    ``r2 = -conj(r1) t1 / conj(t1)``, i.e. ``r1 = -|r| exp(2i phase_t1)``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise ValueError("coupling rate must be >= 0")
    ratio = sys.r2_impedance / sys.r1_impedance
    t1_sq = kappa * sys.tau_rt * ratio
    reflect_sq = 1.0 - kappa * sys.tau_rt
    if np.any(t1_sq >= 1.0) or np.any(reflect_sq <= 0.0):
        raise ValueError("coupling too strong for the perturbative coupler model (|t1|^2 >= 1)")
    phase = np.exp(1j * phase_t1)
    t1 = np.sqrt(t1_sq) * phase
    t2 = t1 / ratio
    r_mag = np.sqrt(reflect_sq)
    r2 = r_mag + 0j
    r1 = -r_mag * phase**2
    return t1, t2, r1, r2, r_mag


def derive_coefficients(sys: SystemParams, phase_t1: float = 0.0, kappa: float | None = None) -> CouplerCoefficients:
    """Coupler coefficients at ``kappa`` (default ``sys.kappa_on``).

    ``phase_t1`` is the free global phase of ``t1``; no efficiency depends on it.
    """
    k = sys.kappa_on if kappa is None else kappa
    t1, t2, r1, r2, r_mag = coefficient_arrays(sys, k, phase_t1)
    return CouplerCoefficients(complex(t1), complex(t2), complex(r1), complex(r2), float(r_mag))


class Shape(str, Enum):
    RECTANGULAR = "rectangular"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class PulseSpec:
    """Drive envelope ``A(t)`` on ``[0, t_drive]``.

    Rectangular: ``A = amplitude``. Exponential: ``A = amplitude * exp(t / tau)``;
    ``tau > 0`` rises, ``tau < 0`` decays. ``detuning`` is the drive-resonator
    angular frequency offset and enters only the field equation.
    """

    shape: Shape
    t_drive: float
    amplitude: float = 1.0
    tau: float = math.inf
    detuning: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be >= 0")
        if not self.t_drive > 0:
            raise ValueError("t_drive must be > 0")
        if self.shape is Shape.EXPONENTIAL and (self.tau == 0 or math.isnan(self.tau)):
            raise ValueError("exponential pulse needs a nonzero tau")

    @classmethod
    def rectangular(cls, t_drive, amplitude=1.0, detuning=0.0) -> "PulseSpec":
        return cls(Shape.RECTANGULAR, t_drive, amplitude, math.inf, detuning)

    @classmethod
    def exponential(cls, tau, t_drive, amplitude=1.0, detuning=0.0) -> "PulseSpec":
        return cls(Shape.EXPONENTIAL, t_drive, amplitude, tau, detuning)

    def shape_values(self, t):
        """Envelope formula without the ``[0, t_drive]`` gate."""
        t = np.asarray(t, dtype=float)
        if self.shape is Shape.RECTANGULAR:
            return np.full(t.shape, self.amplitude)
        return self.amplitude * np.exp(t / self.tau)


def envelope_at(pulse: PulseSpec, t):
    """Real drive envelope at time(s) ``t``; zero outside ``[0, t_drive]``."""
    t = np.asarray(t, dtype=float)
    on = (t >= 0) & (t <= pulse.t_drive)
    out = np.where(on, pulse.shape_values(np.where(on, t, 0.0)), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CouplerSchedule:
    """Coupling versus time.

    Open (``kappa_on``) until the coupler is fully closed at ``t_close``; a
    nonzero ``ramp`` makes the closing linear over ``[t_close - ramp, t_close]``.
    ``t_reopen`` (optional) opens it again, ramping up over the same duration.
    """

    t_close: float
    kappa_off: float = 0.0
    ramp: float = 0.0
    t_reopen: float | None = None

    def __post_init__(self):
        if not self.t_close >= 0:
            raise ValueError("t_close must be >= 0")
        if not self.kappa_off >= 0:
            raise ValueError("kappa_off must be >= 0")
        if not self.ramp >= 0:
            raise ValueError("ramp must be >= 0")
        if self.ramp > self.t_close:
            raise ValueError("ramp must not start before t = 0")
        if self.t_reopen is not None and self.t_reopen < self.t_close:
            raise ValueError("t_reopen must not precede t_close")

    def breakpoints(self) -> list[float]:
        pts = [self.t_close]
        if self.ramp > 0:
            pts.append(self.t_close - self.ramp)
        if self.t_reopen is not None:
            pts.append(self.t_reopen)
            if self.ramp > 0:
                pts.append(self.t_reopen + self.ramp)
        return sorted(set(pts))

    def kappa_at(self, t, kappa_on: float):
        """Coupling at ``t``. Instantaneous switches are right-continuous."""
        t = np.asarray(t, dtype=float)
        k_off = self.kappa_off
        if self.ramp > 0:
            frac = np.clip((self.t_close - t) / self.ramp, 0.0, 1.0)
            k = k_off + (kappa_on - k_off) * frac
            if self.t_reopen is not None:
                up = np.clip((t - self.t_reopen) / self.ramp, 0.0, 1.0)
                k = np.where(t >= self.t_reopen, k_off + (kappa_on - k_off) * up, k)
        else:
            k = np.where(t < self.t_close, kappa_on, k_off)
            if self.t_reopen is not None:
                k = np.where(t >= self.t_reopen, kappa_on, k)
        return k if k.ndim else float(k)

    @classmethod
    def closing_with_drive(cls, pulse: PulseSpec, **kw) -> "CouplerSchedule":
        return cls(t_close=pulse.t_drive, **kw)

