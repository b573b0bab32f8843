import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photoncatch import estimation, pipeline
from photoncatch.coremodel import SystemParams
from photoncatch.estimation import (
    BelowNoiseFloor,
    EnergyEstimate,
    NoiseEstimate,
    absorption_uncertainty,
    absorption_uncertainty_literal,
    gaussian_moment,
    noise_from_samples,
    noise_subtract,
    poisson_fit,
    poisson_pmf,
    raw_signal_variance,
    storage_receiver,
)
from photoncatch.signalsim import AcquisitionConfig, ProcessedRecord

TRIALS = 1000


def within_se(samples, expected, n_se=3.0):
    samples = np.asarray(samples, float)
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    return abs(samples.mean() - expected) <= n_se * se


def noisy_energies(rng, i, q, sigma, n_noise, trials, dt=1.0):
    """Raw window energies ``E_sig`` and noise energies ``E_N`` for repeated trials."""
    n_s = len(i)
    x = rng.normal(0, sigma, (trials, n_s))
    y = rng.normal(0, sigma, (trials, n_s))
    e_sig = dt * np.sum((i + x) ** 2 + (q + y) ** 2, axis=1)
    e_n = dt * np.sum(rng.normal(0, sigma, (trials, 2 * n_noise)) ** 2, axis=1)
    return e_sig, e_n


def signal(n, amp=0.2):
    k = np.arange(n)
    env = amp * np.exp(-(((k - n / 2) / (n / 5)) ** 2))
    return env * np.cos(0.05 * k), env * np.sin(0.05 * k)


# --- noise energy ----------------------------------------------------------------

def test_noise_energy_of_zeros():
    rec = ProcessedRecord(np.arange(10.0), np.zeros(10, complex), 1.0)
    ne = estimation.noise_energy(rec, (0.0, 10.0))
    assert ne.value == 0.0 and ne.variance == 0.0 and ne.n_points == 10


def test_noise_energy_window_checks():
    rec = ProcessedRecord(np.arange(10.0), np.ones(10, complex), 1.0)
    with pytest.raises(ValueError):
        estimation.noise_energy(rec, (-50.0, 5.0))
    with pytest.raises(ValueError):
        estimation.noise_energy(rec, (0.0, 1.0))  # a single point


def test_noise_energy_mean_and_variance():
    rng = np.random.default_rng(1)
    sigma, n_n, t = 0.7, 500, 2e-9
    v = rng.normal(0, sigma, (TRIALS, n_n)) + 1j * rng.normal(0, sigma, (TRIALS, n_n))
    e = np.array([noise_from_samples(row, t).value for row in v])
    expected = 2 * n_n * t * sigma**2
    assert within_se(e, expected)
    assert np.var(e, ddof=1) == pytest.approx(expected**2 / n_n, rel=0.15)
    assert noise_from_samples(v[0], t).variance == pytest.approx(e[0] ** 2 / n_n)


def test_effective_count_only_changes_variance():
    v = np.ones(100, complex)
    a = noise_from_samples(v, 1.0)
    b = noise_from_samples(v, 1.0, fraction=0.5)
    assert a.value == b.value and b.n_eff == 50
    assert b.variance == pytest.approx(2 * a.variance)


# --- noise subtraction --------------------------------------------------------------

def test_zero_noise_subtraction():
    est = noise_subtract(3.5, 40, NoiseEstimate(0.0, 100, 0.0))
    assert est.value == 3.5 and est.variance == 0.0


def test_subtraction_unbiased_without_signal():
    rng = np.random.default_rng(2)
    e_sig, e_n = noisy_energies(rng, np.zeros(500), np.zeros(500), 1.0, 500, TRIALS)
    vals = [noise_subtract(s, 500, NoiseEstimate(n, 500, n * n / 500)).value for s, n in zip(e_sig, e_n)]
    assert within_se(vals, 0.0)


def test_subtraction_unbiased_with_signal():
    rng = np.random.default_rng(3)
    i, q = signal(400, amp=0.5)
    clean = float(np.sum(i**2 + q**2))
    e_sig, e_n = noisy_energies(rng, i, q, 0.3, 300, TRIALS)
    vals = [noise_subtract(s, 400, NoiseEstimate(n, 300, n * n / 300)).value for s, n in zip(e_sig, e_n)]
    assert within_se(vals, clean)


def test_negative_estimates_are_kept():
    est = noise_subtract(1.0, 100, NoiseEstimate(3.0, 100, 0.09))
    assert est.value == pytest.approx(-2.0)
    assert est.variance > 0


def test_variances_match_monte_carlo():
    rng = np.random.default_rng(4)
    n_s = n_n = 500
    i, q = signal(n_s, amp=0.5)
    sigma = 1.0
    e_sig, e_n = noisy_energies(rng, i, q, sigma, n_n, 4000)
    ns = e_sig - n_s / n_n * e_n
    forms = estimation.variances_sigma_form(i, q, sigma, sigma, 1.0, n_n)
    assert np.var(e_sig, ddof=1) == pytest.approx(forms["sig"], rel=0.15)
    assert np.var(ns, ddof=1) == pytest.approx(forms["ns"], rel=0.15)
    assert np.var(e_n, ddof=1) == pytest.approx(forms["noise"], rel=0.15)


@given(
    st.floats(0.05, 3.0),
    st.integers(10, 2000),
    st.integers(10, 2000),
    st.floats(0.0, 2.0),
    st.floats(1e-10, 1.0),
)
@settings(max_examples=200)
def test_energy_forms_equal_sigma_forms(sigma, n_s, n_n, amp, dt):
    i, q = signal(n_s, amp)
    means = estimation.expected_energies(i, q, sigma, sigma, dt, n_n)
    forms = estimation.variances_sigma_form(i, q, sigma, sigma, dt, n_n)
    noise = NoiseEstimate(means["noise"], n_n, means["noise"] ** 2 / n_n)
    assert raw_signal_variance(means["clean"], n_s, noise) == pytest.approx(forms["sig"], rel=1e-10)
    e_ns = noise_subtract(means["clean"] + n_s / n_n * means["noise"], n_s, noise)
    assert e_ns.value == pytest.approx(means["clean"], rel=1e-10, abs=1e-12 * means["noise"])
    assert e_ns.variance == pytest.approx(forms["ns"], rel=1e-10)
    assert noise.variance == pytest.approx(forms["noise"], rel=1e-10)


def test_extra_variance_scales_as_sigma_fourth():
    i, q = signal(300, amp=1.0)
    n_n = 400
    sigmas = np.geomspace(0.01, 1.0, 9)
    excess = []
    for s in sigmas:
        m = estimation.expected_energies(i, q, s, s, 1.0, n_n)
        noise = NoiseEstimate(m["noise"], n_n, m["noise"] ** 2 / n_n)
        sub = noise_subtract(m["clean"] + 300 / n_n * m["noise"], 300, noise)
        raw = raw_signal_variance(m["clean"], 300, noise)
        assert sub.variance >= raw
        excess.append(sub.variance - raw)
    slope = np.polyfit(np.log(sigmas), np.log(excess), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


def test_extra_variance_monte_carlo_ordering():
    rng = np.random.default_rng(12)
    i, q = signal(300, amp=0.5)
    e_sig, e_n = noisy_energies(rng, i, q, 0.5, 300, 3000)
    assert np.var(e_sig - e_n) > np.var(e_sig)


# --- absorption efficiency -------------------------------------------------------------

def test_absorption_noise_free():
    noise = NoiseEstimate(0.0, 100, 0.0)
    a = EnergyEstimate(0.9, 50, 0.0)
    r = EnergyEstimate(0.1, 50, 0.0)
    eta, sigma = absorption_uncertainty(a, r, noise)
    assert eta == pytest.approx(0.9) and sigma == 0.0


def test_absorption_below_noise_floor():
    noise = NoiseEstimate(1.0, 100, 0.01)
    with pytest.raises(BelowNoiseFloor):
        absorption_uncertainty(EnergyEstimate(-0.2, 10, 0.0), EnergyEstimate(0.1, 10, 0.0), noise)


def test_absorption_sigma_monte_carlo():
    rng = np.random.default_rng(6)
    n_abs, n_ref, n_n, sigma = 300, 200, 500, 0.02
    ia, qa = signal(n_abs, 0.3)
    ir, qr = signal(n_ref, 0.06)
    etas, preds = [], []
    for _ in range(TRIALS):
        ea, en = noisy_energies(rng, ia, qa, sigma, n_n, 1)
        er, _ = noisy_energies(rng, ir, qr, sigma, 1, 1)
        noise = NoiseEstimate(en[0], n_n, en[0] ** 2 / n_n)
        a = noise_subtract(ea[0], n_abs, noise)
        r = noise_subtract(er[0], n_ref, noise)
        eta, s = absorption_uncertainty(a, r, noise)
        etas.append(eta)
        preds.append(s)
    assert np.std(etas, ddof=1) == pytest.approx(np.mean(preds), rel=0.15)


def test_absorption_sigma_pipeline_repeats():
    sys = SystemParams.device()
    proto = pipeline.time_reversed()
    acq = AcquisitionConfig()
    acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq))
    rows = pipeline.monte_carlo_absorption(sys, proto, acq, range(100, 160))
    assert np.std(rows[:, 0], ddof=1) == pytest.approx(np.mean(rows[:, 1]), rel=0.15)


def test_absorption_sigma_tracks_noise_to_signal():
    sys = SystemParams.device()
    proto = pipeline.time_reversed()
    for ratio in (0.003, 0.01, 0.03):
        acq = AcquisitionConfig(rng_seed=21)
        acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq, ratio))
        m = pipeline.measure(sys, proto, acq, with_off=False)
        assert 0.5 <= m.absorption_sigma / (0.06 * ratio) <= 2.0


def test_symmetric_form_is_scale_free():
    noise = NoiseEstimate(0.05, 400, 0.05**2 / 400)
    a = noise_subtract(1.0, 300, noise)
    r = noise_subtract(0.2, 200, noise)
    c = 1e3
    noise_c = NoiseEstimate(noise.value * c, 400, noise.variance * c * c)
    a_c = noise_subtract(a.value * c + 300 / 400 * noise_c.value, 300, noise_c)
    r_c = noise_subtract(r.value * c + 200 / 400 * noise_c.value, 200, noise_c)
    assert absorption_uncertainty(a, r, noise)[1] == pytest.approx(absorption_uncertainty(a_c, r_c, noise_c)[1], rel=1e-9)
    literal = absorption_uncertainty_literal(a, r, noise)
    assert literal != pytest.approx(absorption_uncertainty_literal(a_c, r_c, noise_c), rel=1e-3)


def test_power_independence():
    sys = SystemParams.device()
    proto = pipeline.time_reversed()
    acq = AcquisitionConfig(rng_seed=31)
    acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq) * 0.1)
    results = [pipeline.measure(sys, proto, replace(acq, rng_seed=31 + i), scale=s, with_off=False) for i, s in enumerate((0.1, 1.0, 10.0))]
    eta = np.array([m.absorption for m in results])
    sig = np.array([m.absorption_sigma for m in results])
    mean = np.average(eta, weights=1 / sig**2)
    assert np.all(np.abs(eta - mean) <= 3 * sig)


# --- storage and receiver ---------------------------------------------------------------

def test_equal_energies():
    e = EnergyEstimate(2.0, 100, 0.0)
    rep = storage_receiver(e, e, (0.97, 0.01))
    assert rep.storage.value == rep.receiver.value == rep.absorption.value == 0.97


def test_quoted_ratios():
    rep = storage_receiver(EnergyEstimate(0.961, 100, 0.0), EnergyEstimate(1.0, 100, 0.0), (0.9941, 0.0))
    assert rep.storage.value == pytest.approx(0.955, abs=5e-4)
    assert rep.receiver.value == pytest.approx(0.9747, abs=2e-4)


def test_propagation_matches_sampling():
    rng = np.random.default_rng(8)
    on, off = EnergyEstimate(0.96, 100, 0.01**2), EnergyEstimate(1.0, 100, 0.012**2)
    eta = (0.99, 0.004)
    rep = storage_receiver(on, off, eta)
    n = 200_000
    s_on = rng.normal(on.value, on.sigma, n)
    s_off = rng.normal(off.value, off.sigma, n)
    s_eta = rng.normal(*eta, n)
    assert np.std(s_on / s_off * s_eta) == pytest.approx(rep.storage.sigma, rel=0.10)
    assert np.std(np.sqrt(s_on / s_off) * s_eta) == pytest.approx(rep.receiver.sigma, rel=0.10)


def test_storage_rejects_nonpositive():
    with pytest.raises(ValueError):
        storage_receiver(EnergyEstimate(-1.0, 10, 0.0), EnergyEstimate(1.0, 10, 0.0), (0.9, 0.01))


def test_report_json():
    rep = storage_receiver(EnergyEstimate(0.9, 10, 1e-4), EnergyEstimate(1.0, 10, 1e-4), (0.99, 0.01))
    rep = replace(rep, provenance={"seed": 3, "windows": {"abs": [1, 2]}})
    d = estimation.report_dict(rep)
    assert set(d) == {"absorption", "storage", "receiver", "provenance"}
    assert d["absorption"] == {"value": 0.99, "sigma": 0.01}
    assert d["provenance"]["seed"] == 3
    assert rep.to_json() == rep.to_json()


# --- moments --------------------------------------------------------------------------

@pytest.mark.parametrize("p, expected", [(0, 1.0), (1, 0.0), (2, 1.0), (3, 0.0), (4, 3.0), (5, 0.0), (6, 15.0)])
def test_gaussian_moment_values(p, expected):
    assert gaussian_moment(p, 1.0) == expected


@pytest.mark.parametrize("p", range(1, 7))
def test_gaussian_moment_sampled(p):
    rng = np.random.default_rng(p)
    sigma = 1.3
    g = rng.normal(0, sigma, 1_000_000) ** p
    assert within_se(g, gaussian_moment(p, sigma))
    closed = (1 + (-1) ** p) / 2 * math.prod(range(p - 1, 0, -2)) * sigma**p
    assert gaussian_moment(p, sigma) == pytest.approx(closed)


def test_gaussian_moment_rejects_bad_order():
    with pytest.raises(ValueError):
        gaussian_moment(-1)
    with pytest.raises(ValueError):
        gaussian_moment(2.5)


def test_weighted_sum_moments():
    rng = np.random.default_rng(9)
    sigma = 0.8
    w = rng.uniform(-1, 2, 30)
    m = estimation.weighted_sum_moments(w, sigma)
    g = rng.normal(0, sigma, (200_000, 30))
    lin = g @ w
    sq = (g**2) @ w
    assert within_se(lin, m["linear_mean"])
    assert within_se(lin**2, m["linear_second"])
    assert within_se(sq, m["square_mean"])
    assert within_se(sq**2, m["square_second"])


# --- Poisson calibration -----------------------------------------------------------------

def test_poisson_vacuum():
    assert poisson_fit([1.0, 0.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-9)


def test_poisson_exact():
    n = np.arange(13)
    p = np.exp(n * math.log(2.0) - 2.0) / np.array([math.factorial(k) for k in n])
    assert poisson_fit(p) == pytest.approx(2.0, abs=1e-3)


def test_poisson_perturbed():
    rng = np.random.default_rng(10)
    p = poisson_pmf(np.arange(13), 2.0) * (1 + 0.01 * rng.uniform(-1, 1, 13))
    p = p / max(1.0, p.sum())
    assert poisson_fit(p) == pytest.approx(2.0, rel=0.05)


@given(st.floats(0.05, 8.0))
def test_poisson_recovers_mean(mean):
    p = poisson_pmf(np.arange(40), mean)
    assert poisson_fit(p) == pytest.approx(mean, rel=1e-4)


def test_poisson_rejects_bad_input():
    with pytest.raises(ValueError):
        poisson_fit([0.0, 0.0])
    with pytest.raises(ValueError):
        poisson_fit([0.5, -0.1])
    with pytest.raises(ValueError):
        poisson_fit([0.8, 0.8])
