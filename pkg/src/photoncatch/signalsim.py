"""Synthetic heterodyne records and the processing chain that recovers ``V(t)``.

``synthesize`` runs the measurement forward: the output wave is resampled to
the ADC rate, shifted to the sideband, given a Q-gain mismatch, DC offsets and
Gaussian noise. ``process`` undoes it in the order used on real data: Q
rescale, DC removal from the pre-drive mean, demodulation, sharp low-pass.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import FieldTrajectory


@dataclass(frozen=True)
class AcquisitionConfig:
    """ADC record settings.

    ``noise_sigma`` is the per-quadrature, per-sample noise of a single shot;
    averaging ``n_averages`` shots divides it by ``sqrt(n_averages)``.
    ``pre_drive`` seconds of signal-free record precede ``t = 0``. The
    ``guard`` excludes the last part of the pre-drive window from noise and
    DC estimates, since the sharp filter rings slightly ahead of the pulse.
    """

    sample_rate: float = 5e8
    f_sb: float = 1.65e8
    q_scale: float = 1.0
    dc_offset: complex = 0j
    noise_sigma: float = 0.0
    n_averages: float = 3e6
    pre_drive: float = 1e-6
    guard: float = 20e-9
    lowpass_hz: float = 1.5e8
    rng_seed: int = 0
    filter_kind: str = "brickwall"
    literal_averaging: bool = False
    adc_bits: int | None = None
    adc_full_scale: float = 1.0
    spur_hz: float = 0.0
    spur_amplitude: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if not 0 < self.f_sb < self.sample_rate / 2:
            raise ValueError("f_sb must lie in (0, sample_rate/2)")
        if not 0 < self.lowpass_hz < self.sample_rate / 2:
            raise ValueError("lowpass_hz must lie in (0, sample_rate/2)")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.n_averages >= 1:
            raise ValueError("n_averages must be >= 1")
        if not 0 <= self.guard < self.pre_drive:
            raise ValueError("guard must be shorter than the pre-drive window")
        if self.filter_kind not in ("brickwall", "sinc"):
            raise ValueError("filter_kind must be 'brickwall' or 'sinc'")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def averaged_sigma(self) -> float:
        return self.noise_sigma / np.sqrt(self.n_averages)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dc_offset"] = [self.dc_offset.real, self.dc_offset.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionConfig":
        d = dict(d)
        if "dc_offset" in d and not isinstance(d["dc_offset"], complex):
            re, im = d["dc_offset"] if isinstance(d["dc_offset"], (list, tuple)) else (d["dc_offset"], 0.0)
            d["dc_offset"] = complex(re, im)
        return cls(**d)


@dataclass(frozen=True)
class RawRecord:
    i_samples: np.ndarray
    q_samples: np.ndarray
    config: AcquisitionConfig
    t0: float

    def __post_init__(self):
        if len(self.i_samples) != len(self.q_samples):
            raise ValueError("I and Q must have equal length")
        if not (np.all(np.isfinite(self.i_samples)) and np.all(np.isfinite(self.q_samples))):
            raise ValueError("raw samples must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.i_samples)) * self.config.dt

    def to_csv(self, path, extra_config: dict | None = None) -> None:
        _write(path, ["t", "i", "q"], [self.times, self.i_samples, self.q_samples],
               {"acquisition": self.config.to_dict(), "t0": self.t0, **(extra_config or {})})

    @classmethod
    def from_csv(cls, path) -> "RawRecord":
        cfg, data = _read(path)
        acq = AcquisitionConfig.from_dict(cfg["acquisition"])
        return cls(data[:, 1], data[:, 2], acq, float(cfg["t0"]))


@dataclass(frozen=True)
class ProcessedRecord:
    times: np.ndarray
    v_complex: np.ndarray
    dt: float
    noise_power_estimate: float | None = None
    energy_curve: np.ndarray | None = None

    def window_mask(self, window) -> np.ndarray:
        lo, hi = window
        return (self.times >= lo) & (self.times < hi)

    def to_csv(self, path, config: dict | None = None) -> None:
        e = self.energy_curve if self.energy_curve is not None else np.full(len(self.times), np.nan)
        meta = {"dt": self.dt, "noise_power_estimate": self.noise_power_estimate, **(config or {})}
        _write(path, ["t", "re_v", "im_v", "e"], [self.times, self.v_complex.real, self.v_complex.imag, e], meta)

    @classmethod
    def from_csv(cls, path) -> "ProcessedRecord":
        cfg, data = _read(path)
        e = data[:, 3]
        return cls(
            data[:, 0],
            data[:, 1] + 1j * data[:, 2],
            float(cfg.get("dt", data[1, 0] - data[0, 0])),
            cfg.get("noise_power_estimate"),
            None if np.all(np.isnan(e)) else e,
        )


def _write(path, header, columns, config):
    with Path(path).open("w", newline="") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.column_stack(columns):
            w.writerow([repr(float(x)) for x in row])


def _read(path):
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("# config: "):
            raise ValueError(f"{path}: missing config header line")
        cfg = json.loads(first[len("# config: "):])
        next(fh)
        data = np.array([[float(x) for x in row] for row in csv.reader(fh)])
    return cfg, data


def sample_times(trajectory: FieldTrajectory, cfg: AcquisitionConfig) -> np.ndarray:
    n = int(np.floor((trajectory.times[-1] + cfg.pre_drive) * cfg.sample_rate + 1e-9)) + 1
    return -cfg.pre_drive + np.arange(n) * cfg.dt


def baseband(trajectory: FieldTrajectory, times: np.ndarray) -> np.ndarray:
    """Output wave at ``times`` (linear interpolation; zero before the drive)."""
    if times[-1] > trajectory.times[-1] * (1 + 1e-12):
        raise ValueError("trajectory is shorter than the acquisition window")
    v = trajectory.v_out
    re = np.interp(times, trajectory.times, v.real, left=0.0)
    im = np.interp(times, trajectory.times, v.imag, left=0.0)
    return np.where(times < 0, 0.0, re + 1j * im)


def _quantize(x: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    step = 2 * full_scale / 2**bits
    levels = 2 ** (bits - 1)
    return np.clip(np.round(x / step), -levels, levels - 1) * step


def synthesize(trajectory: FieldTrajectory, cfg: AcquisitionConfig, scale: float = 1.0) -> RawRecord:
    """Raw averaged I/Q record for the output wave of ``trajectory``.

    ``scale`` multiplies the output wave (amplifier gain, or photon-number
    rescaling). Deterministic given ``cfg.rng_seed``.
    """
    t = sample_times(trajectory, cfg)
    v = scale * baseband(trajectory, t)
    if cfg.spur_amplitude:
        v = v + cfg.spur_amplitude * np.exp(-2j * np.pi * cfg.spur_hz * t)
    up = v * np.exp(-2j * np.pi * cfg.f_sb * t)
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(t)
    if cfg.literal_averaging:
        shots = int(cfg.n_averages)
        noise_i = np.zeros(n)
        noise_q = np.zeros(n)
        for _ in range(shots):
            noise_i += rng.normal(0.0, cfg.noise_sigma, n)
            noise_q += rng.normal(0.0, cfg.noise_sigma, n)
        noise_i /= shots
        noise_q /= shots
    else:
        noise_i = rng.normal(0.0, cfg.averaged_sigma, n)
        noise_q = rng.normal(0.0, cfg.averaged_sigma, n)
    i = up.real + noise_i + cfg.dc_offset.real
    q = cfg.q_scale * up.imag + noise_q + cfg.dc_offset.imag
    if cfg.adc_bits:
        i = _quantize(i, cfg.adc_bits, cfg.adc_full_scale)
        q = _quantize(q, cfg.adc_bits, cfg.adc_full_scale)
    return RawRecord(i, q, cfg, float(t[0]))


def lowpass(v: np.ndarray, sample_rate: float, cutoff: float, kind: str = "brickwall") -> np.ndarray:
    """Zero-phase low-pass of a complex record (two-sided cutoff ``|f| <= cutoff``).

    The record is zero-padded to twice its length so the FFT filter does not
    wrap the end of the record onto its start.
    """
    n = len(v)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.fft(v, nfft)
    f = np.fft.fftfreq(nfft, 1.0 / sample_rate)
    if kind == "brickwall":
        spec[np.abs(f) > cutoff] = 0.0
    else:
        # Windowed-sinc FIR, 129 taps, Blackman window, applied through the FFT.
        taps = 129
        m = np.arange(taps) - taps // 2
        h = 2 * cutoff / sample_rate * np.sinc(2 * cutoff / sample_rate * m) * np.blackman(taps)
        hk = np.fft.fft(np.roll(np.pad(h, (0, nfft - taps)), -(taps // 2)))
        spec *= hk
    return np.fft.ifft(spec)[:n]


def pre_drive_mask(times: np.ndarray, cfg: AcquisitionConfig) -> np.ndarray:
    return times < -cfg.guard


def process(raw: RawRecord, q_correction: float | None = None) -> ProcessedRecord:
    """Recover ``V(t)``: Q rescale, DC removal, demodulation, low-pass.

    ``q_correction`` defaults to ``1/q_scale`` (perfect calibration).
    """
    cfg = raw.config
    t = raw.times
    pre = pre_drive_mask(t, cfg)
    if np.count_nonzero(pre) < 100:
        raise ValueError("pre-drive window must hold at least 100 samples")
    qc = 1.0 / cfg.q_scale if q_correction is None else q_correction
    v = raw.i_samples + 1j * qc * raw.q_samples
    v = v - v[pre].mean()
    v = v * np.exp(2j * np.pi * cfg.f_sb * t)
    v = lowpass(v, cfg.sample_rate, cfg.lowpass_hz, cfg.filter_kind)
    return ProcessedRecord(t, v, cfg.dt)


def energy_curve(rec: ProcessedRecord, noise_window) -> ProcessedRecord:
    """Fill in the noise power ``N`` and ``E(t) = sum (|V|^2 - N) dt`` (``E[0] = 0``)."""
    mask = rec.window_mask(noise_window)
    if not np.any(mask):
        raise ValueError("noise window holds no samples")
    power = np.abs(rec.v_complex) ** 2
    noise = float(power[mask].mean())
    e = np.concatenate([[0.0], np.cumsum((power[:-1] - noise) * rec.dt)])
    return replace(rec, noise_power_estimate=noise, energy_curve=e)


def passband_fraction(cfg: AcquisitionConfig) -> float:
    """Fraction of white-noise power kept by the low-pass (``2 f_c / f_s``)."""
    return 2 * cfg.lowpass_hz / cfg.sample_rate


def sigma_for_noise_ratio(signal_energy: float, window_samples: int, ratio: float, cfg: AcquisitionConfig) -> float:
    """Single-shot ``noise_sigma`` giving ``noise energy / signal energy = ratio``
    in a window of ``window_samples`` after filtering.

    Energies are ``sum |V|^2 dt``; the filtered noise power per sample is
    ``2 sigma_avg^2 * passband_fraction``.
    """
    noise_energy = ratio * signal_energy
    sigma_avg_sq = noise_energy / (2 * window_samples * cfg.dt * passband_fraction(cfg))
    return float(np.sqrt(sigma_avg_sq * cfg.n_averages))
