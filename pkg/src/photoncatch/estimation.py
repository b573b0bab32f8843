"""Unbiased noise-subtracted energies and their uncertainties.

A window of ``N_S`` samples ``(I_k + x_k, Q_k + y_k)`` with Gaussian noise of
per-quadrature std ``sigma`` has raw energy ``E_sig = t sum |V_k|^2``. A
signal-free window of ``N_N`` samples gives the noise energy ``E_N``; then
``E_sig - (N_S/N_N) E_N`` is an unbiased estimate of ``t sum (I_k^2 + Q_k^2)``.

Variances below are the equal-quadrature (``sigma_x = sigma_y``) forms written
in terms of the measured energies; the sigma forms are kept for checking.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import gammaln

from .signalsim import ProcessedRecord


class BelowNoiseFloor(ValueError):
    """Noise-subtracted total energy is not positive."""


@dataclass(frozen=True)
class NoiseEstimate:
    """Noise energy of a signal-free window.

    ``n_effective`` is the number of independent samples when the noise is
    correlated (after a low-pass keeping a fraction ``f`` of the band it is
    ``f * n_points``); it defaults to ``n_points`` and enters only variances.
    """

    value: float
    n_points: int
    variance: float
    n_effective: float | None = None

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("noise window needs at least 2 points")

    @property
    def n_eff(self) -> float:
        return self.n_points if self.n_effective is None else self.n_effective


@dataclass(frozen=True)
class EnergyEstimate:
    value: float
    n_points: int
    variance: float
    window: tuple | None = None
    n_effective: float | None = None

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def n_eff(self) -> float:
        return self.n_points if self.n_effective is None else self.n_effective


@dataclass(frozen=True)
class Measured:
    value: float
    sigma: float


@dataclass(frozen=True)
class EfficiencyReport:
    absorption: Measured
    storage: Measured | None = None
    receiver: Measured | None = None
    provenance: dict | None = None

    def to_json(self) -> str:
        d = {}
        for name in ("absorption", "storage", "receiver"):
            m = getattr(self, name)
            d[name] = None if m is None else {"value": m.value, "sigma": m.sigma}
        d["provenance"] = self.provenance or {}
        return json.dumps(d, sort_keys=True, indent=2)


def gaussian_moment(p: int, sigma: float = 1.0) -> float:
    """``<g^p>`` for zero-mean Gaussian ``g``: ``(p-1)!! sigma^p`` for even p, else 0."""
    if p < 0 or int(p) != p:
        raise ValueError("p must be a non-negative integer")
    if p % 2:
        return 0.0
    double_fact = 1
    for k in range(p - 1, 0, -2):
        double_fact *= k
    return double_fact * sigma**p


def weighted_sum_moments(w, sigma: float) -> dict:
    """First and second moments of ``sum w_k g_k`` and ``sum w_k g_k^2``."""
    w = np.asarray(w, dtype=float)
    s1, s2 = w.sum(), np.sum(w**2)
    return {
        "linear_mean": 0.0,
        "linear_second": sigma**2 * s2,
        "square_mean": sigma**2 * s1,
        "square_second": 2 * sigma**4 * s2 + sigma**4 * s1**2,
    }


# --- energies from samples ---------------------------------------------------

def window_energy(v: np.ndarray, dt: float) -> float:
    return float(dt * np.sum(np.abs(v) ** 2))


def noise_from_samples(v: np.ndarray, dt: float, fraction: float = 1.0) -> NoiseEstimate:
    """``fraction`` scales the sample count to independent samples (see :class:`NoiseEstimate`)."""
    e = window_energy(v, dt)
    n = len(v)
    n_eff = fraction * n
    return NoiseEstimate(e, n, e * e / n_eff, None if fraction == 1.0 else n_eff)


def _window(rec: ProcessedRecord, window) -> np.ndarray:
    mask = rec.window_mask(window)
    lo, hi = window
    if lo < rec.times[0] - rec.dt / 2 or hi > rec.times[-1] + rec.dt * 1.5:
        raise ValueError(f"window {window} lies outside the record")
    return rec.v_complex[mask]


def noise_energy(rec: ProcessedRecord, window, fraction: float = 1.0) -> NoiseEstimate:
    """``E_N = t sum |V_k|^2`` over a signal-free window; variance ``E_N^2 / N_N``."""
    return noise_from_samples(_window(rec, window), rec.dt, fraction)


def raw_signal_variance(e_ns: float, n_s: float, noise: NoiseEstimate) -> float:
    """Variance of the raw window energy ``E_sig`` in terms of measured energies."""
    e_n, n_n = noise.value, noise.n_eff
    return 2.0 / n_n * max(e_ns, 0.0) * e_n + n_s / n_n**2 * e_n**2


def noise_subtract(e_sig: float, n_s: int, noise: NoiseEstimate, window=None, fraction: float = 1.0) -> EnergyEstimate:
    """``E_sig - (N_S/N_N) E_N`` with its variance.

    The estimate is returned unclamped (it may be negative when noise
    dominates); only the variance uses ``max(E^NS, 0)``. ``fraction`` converts
    ``n_s`` to independent samples for the variance, as for the noise window.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    value = e_sig - n_s / noise.n_points * noise.value
    s_eff, n_n, e_n = fraction * n_s, noise.n_eff, noise.value
    var = 2.0 / n_n * max(value, 0.0) * e_n + s_eff * (s_eff + n_n) / n_n**3 * e_n**2
    return EnergyEstimate(value, n_s, var, window, None if fraction == 1.0 else s_eff)


def window_estimate(rec: ProcessedRecord, window, noise: NoiseEstimate, fraction: float = 1.0) -> EnergyEstimate:
    v = _window(rec, window)
    return noise_subtract(window_energy(v, rec.dt), len(v), noise, tuple(window), fraction)


def variances_sigma_form(i, q, sigma_x: float, sigma_y: float, dt: float, n_noise: int) -> dict:
    """Variances of ``E_sig``, ``E_N`` and ``E^NS`` from the true signal and noise levels."""
    i, q = np.asarray(i, float), np.asarray(q, float)
    n_s = len(i)
    var_sig = 4 * dt**2 * np.sum(i**2 * sigma_x**2 + q**2 * sigma_y**2) + 2 * n_s * dt**2 * (sigma_x**4 + sigma_y**4)
    var_n = 2 * n_noise * dt**2 * (sigma_x**4 + sigma_y**4)
    return {"sig": float(var_sig), "noise": float(var_n), "ns": float(var_sig + (n_s / n_noise) ** 2 * var_n)}


def expected_energies(i, q, sigma_x: float, sigma_y: float, dt: float, n_noise: int) -> dict:
    """Means of ``E_sig`` and ``E_N`` and the noiseless energy."""
    i, q = np.asarray(i, float), np.asarray(q, float)
    n_s = len(i)
    clean = dt * np.sum(i**2 + q**2)
    return {
        "clean": float(clean),
        "sig": float(clean + dt * n_s * (sigma_x**2 + sigma_y**2)),
        "noise": float(dt * n_noise * (sigma_x**2 + sigma_y**2)),
    }


# --- efficiencies ------------------------------------------------------------

def absorption_uncertainty(e_abs: EnergyEstimate, e_ref: EnergyEstimate, noise: NoiseEstimate) -> tuple[float, float]:
    """Absorption efficiency ``E_abs / (E_abs + E_ref)`` and its standard error.

    The raw-energy variances of the two windows and the shared noise estimate
    are independent; ``E_N`` enters both subtracted energies, hence the cross
    weight ``(N_ref E_abs - N_abs E_ref) / N_N``. The reflected-window term
    carries ``E_abs^2 / E_tot^4`` (its partial derivative squared).
    """
    a, r = e_abs.value, e_ref.value
    total = a + r
    if total <= 0:
        raise BelowNoiseFloor("noise-subtracted total energy is not positive")
    var_a = raw_signal_variance(a, e_abs.n_eff, noise)
    var_r = raw_signal_variance(r, e_ref.n_eff, noise)
    cross = (e_ref.n_eff * a - e_abs.n_eff * r) / (noise.n_eff * total**2)
    var = var_a * (r / total**2) ** 2 + var_r * a**2 / total**4 + noise.variance * cross**2
    return a / total, math.sqrt(var)


def absorption_uncertainty_literal(e_abs: EnergyEstimate, e_ref: EnergyEstimate, noise: NoiseEstimate) -> float:
    """Same, with the reflected-window term taken as ``var_ref / E_tot^4`` verbatim."""
    a, r = e_abs.value, e_ref.value
    total = a + r
    var_a = raw_signal_variance(a, e_abs.n_eff, noise)
    var_r = raw_signal_variance(r, e_ref.n_eff, noise)
    cross = (e_ref.n_eff * a - e_abs.n_eff * r) / (noise.n_eff * total**2)
    return math.sqrt(var_a * (r / total**2) ** 2 + var_r / total**4 + noise.variance * cross**2)


def storage_receiver(e_on_total: EnergyEstimate, e_off_total: EnergyEstimate, absorption: tuple[float, float]) -> EfficiencyReport:
    """Storage ``(E_on/E_off) * abs`` and receiver ``sqrt(E_on/E_off) * abs``,
    with independent-error propagation."""
    on, off = e_on_total.value, e_off_total.value
    if on <= 0 or off <= 0:
        raise ValueError("E_on and E_off must be positive")
    eta, s_eta = absorption
    ratio = on / off
    rel_ratio_sq = e_on_total.variance / on**2 + e_off_total.variance / off**2
    rel_eta_sq = (s_eta / eta) ** 2 if eta else 0.0
    storage = ratio * eta
    receiver = math.sqrt(ratio) * eta
    return EfficiencyReport(
        absorption=Measured(eta, s_eta),
        storage=Measured(storage, storage * math.sqrt(rel_ratio_sq + rel_eta_sq)),
        receiver=Measured(receiver, receiver * math.sqrt(rel_ratio_sq / 4 + rel_eta_sq)),
    )


# --- photon-number calibration -----------------------------------------------

def poisson_pmf(n, mean: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if mean == 0:
        return (n == 0).astype(float)
    return np.exp(n * np.log(mean) - mean - gammaln(n + 1))


def poisson_fit(p_n, weights=None) -> float:
    """Least-squares Poisson mean for a measured Fock distribution ``p_n`` (n = 0, 1, ...)."""
    p = np.asarray(p_n, dtype=float)
    if np.any(p < 0) or p.sum() > 1 + 1e-6:
        raise ValueError("p_n must be non-negative and sum to at most 1")
    if not np.any(p > 0):
        raise ValueError("p_n is all zero")
    n = np.arange(len(p))
    w = np.ones_like(p) if weights is None else np.sqrt(np.asarray(weights, float))
    guess = float(np.sum(n * p) / p.sum())
    res = least_squares(lambda m: w * (poisson_pmf(n, m[0]) - p), x0=[guess], bounds=([0.0], [np.inf]), xtol=1e-14, ftol=1e-14)
    return float(res.x[0])


def report_dict(report: EfficiencyReport) -> dict:
    return json.loads(report.to_json())


def estimate_dict(e: EnergyEstimate) -> dict:
    return asdict(e)
