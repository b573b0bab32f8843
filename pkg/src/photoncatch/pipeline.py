"""End-to-end synthetic measurement: capture, idle, release.

The coupler is open while the pulse drives the resonator, closed for an idle
period, then reopened so the stored energy leaks out. The record is split at
the middle of the idle: energy before is reflected (``E_ref``), energy after
is what was absorbed (``E_abs``). A second run with the coupler always closed
gives the incident-energy reference ``E_off``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dynamics, estimation, signalsim
from .coremodel import CouplerSchedule, PulseSpec, SystemParams
from .signalsim import AcquisitionConfig

REFERENCE_NOISE_RATIO = 0.01


@dataclass(frozen=True)
class Protocol:
    pulse: PulseSpec
    idle: float = 30e-9
    release: float | None = None

    def schedule(self, kappa_on: float) -> CouplerSchedule:
        return CouplerSchedule(t_close=self.pulse.t_drive, t_reopen=self.pulse.t_drive + self.idle)

    def release_time(self, kappa_on: float) -> float:
        return 10.0 / kappa_on if self.release is None else self.release

    @property
    def t_split(self) -> float:
        return self.pulse.t_drive + self.idle / 2


def time_reversed(kappa: float = 1 / 50e-9, length: float = 400e-9) -> Protocol:
    """Rising exponential with ``tau = 2/kappa``."""
    return Protocol(PulseSpec.exponential(2.0 / kappa, length))


def natural(kappa: float = 1 / 50e-9, length: float = 100e-9) -> Protocol:
    """Decaying exponential with ``tau = -2/kappa`` (natural emission shape)."""
    return Protocol(PulseSpec.exponential(-2.0 / kappa, length))


@dataclass
class Measurement:
    protocol: Protocol
    trajectory: dynamics.FieldTrajectory
    ledger: dynamics.EnergyLedger
    raw: signalsim.RawRecord
    processed: signalsim.ProcessedRecord
    windows: dict
    noise: estimation.NoiseEstimate
    e_ref: estimation.EnergyEstimate
    e_abs: estimation.EnergyEstimate
    e_on_total: estimation.EnergyEstimate
    absorption: float
    absorption_sigma: float
    report: estimation.EfficiencyReport | None = None
    off_raw: signalsim.RawRecord | None = None
    off_processed: signalsim.ProcessedRecord | None = None
    e_off_total: estimation.EnergyEstimate | None = None

    @property
    def trajectory_absorption(self) -> float:
        """Absorption from the noiseless output wave: ``1 - E_out,capture / E_out``."""
        return 1.0 - self.ledger.e_out_capture / self.ledger.e_out


def _windows(raw: signalsim.RawRecord, t_split: float) -> dict:
    cfg = raw.config
    t_end = raw.times[-1] + cfg.dt
    return {
        "noise": (raw.t0, -cfg.guard),
        "ref": (-cfg.guard, t_split),
        "abs": (t_split, t_end),
        "total": (-cfg.guard, t_end),
    }


def _analyse(raw: signalsim.RawRecord, t_split: float, fraction: float):
    proc = signalsim.process(raw)
    w = _windows(raw, t_split)
    proc = signalsim.energy_curve(proc, w["noise"])
    noise = estimation.noise_energy(proc, w["noise"], fraction)
    return proc, w, noise


def sample_fraction(acq: AcquisitionConfig, correlated: bool) -> float:
    """Independent samples per recorded sample: the kept fraction of the band
    when the low-pass correlation is accounted for, else 1."""
    return signalsim.passband_fraction(acq) if correlated else 1.0


def noiseless_trajectory(sys: SystemParams, protocol: Protocol, schedule: CouplerSchedule | None = None):
    schedule = protocol.schedule(sys.kappa_on) if schedule is None else schedule
    horizon = max(schedule.t_reopen or 0.0, schedule.t_close, protocol.pulse.t_drive) + protocol.release_time(sys.kappa_on)
    return dynamics.simulate(sys, protocol.pulse, schedule, horizon=horizon)


def noise_sigma_for_ratio(sys: SystemParams, protocol: Protocol, acq: AcquisitionConfig, ratio: float = REFERENCE_NOISE_RATIO) -> float:
    """Single-shot noise giving release-window noise energy = ``ratio`` x total signal energy."""
    traj, _ = noiseless_trajectory(sys, protocol)
    clean = replace(acq, noise_sigma=0.0)
    raw = signalsim.synthesize(traj, clean)
    proc = signalsim.process(raw)
    w = _windows(raw, protocol.t_split)
    total = estimation.window_energy(proc.v_complex[proc.window_mask(w["total"])], proc.dt)
    n_release = int(np.count_nonzero(proc.window_mask(w["abs"])))
    return signalsim.sigma_for_noise_ratio(total, n_release, ratio, acq)


def measure(
    sys: SystemParams,
    protocol: Protocol,
    acq: AcquisitionConfig,
    with_off: bool = True,
    scale: float = 1.0,
    correlated: bool = True,
) -> Measurement:
    """Run dynamics -> synthesize -> process -> estimate for one protocol.

    With ``with_off`` a second, independently seeded record with the coupler
    closed throughout provides ``E_off`` for storage and receiver efficiencies.
    ``correlated`` counts independent rather than recorded samples in the
    variances (the filtered noise is correlated between neighbouring samples).
    """
    f = sample_fraction(acq, correlated)
    traj, ledger = noiseless_trajectory(sys, protocol)
    raw = signalsim.synthesize(traj, acq, scale=scale)
    proc, w, noise = _analyse(raw, protocol.t_split, f)
    e_ref = estimation.window_estimate(proc, w["ref"], noise, f)
    e_abs = estimation.window_estimate(proc, w["abs"], noise, f)
    e_on = estimation.window_estimate(proc, w["total"], noise, f)
    eta, sigma = estimation.absorption_uncertainty(e_abs, e_ref, noise)
    report = estimation.EfficiencyReport(estimation.Measured(eta, sigma))
    off_raw = off_proc = e_off = None
    if with_off:
        off_traj, _ = noiseless_trajectory(sys, protocol, CouplerSchedule(t_close=0.0))
        off_raw = signalsim.synthesize(off_traj, replace(acq, rng_seed=acq.rng_seed + 1), scale=scale)
        off_proc, off_w, off_noise = _analyse(off_raw, protocol.t_split, f)
        e_off = estimation.window_estimate(off_proc, off_w["total"], off_noise, f)
        report = estimation.storage_receiver(e_on, e_off, (eta, sigma))
    report = replace(
        report,
        provenance={
            "windows": {k: list(v) for k, v in w.items()},
            "counts": {"noise": noise.n_points, "ref": e_ref.n_points, "abs": e_abs.n_points},
            "seed": acq.rng_seed,
            "independent_sample_fraction": f,
        },
    )
    return Measurement(
        protocol, traj, ledger, raw, proc, w, noise, e_ref, e_abs, e_on, eta, sigma, report, off_raw, off_proc, e_off
    )


def monte_carlo_absorption(sys, protocol, acq, seeds, correlated: bool = True) -> np.ndarray:
    """Rows of ``(absorption, predicted sigma)`` over independent noise seeds."""
    f = sample_fraction(acq, correlated)
    traj, _ = noiseless_trajectory(sys, protocol)
    out = []
    for seed in seeds:
        raw = signalsim.synthesize(traj, replace(acq, rng_seed=int(seed)))
        proc, w, noise = _analyse(raw, protocol.t_split, f)
        e_ref = estimation.window_estimate(proc, w["ref"], noise, f)
        e_abs = estimation.window_estimate(proc, w["abs"], noise, f)
        out.append(estimation.absorption_uncertainty(e_abs, e_ref, noise))
    return np.asarray(out)
