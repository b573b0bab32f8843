"""One test per acceptance criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also collected in the terminal summary.
"""
import math
import time
from dataclasses import replace

import numpy as np

from photoncatch import analytic, dynamics, estimation, pipeline, validation
from photoncatch.coremodel import CouplerSchedule, PulseSpec, SystemParams, derive_coefficients
from photoncatch.estimation import NoiseEstimate, noise_subtract
from photoncatch.signalsim import AcquisitionConfig

TWO_PI_MHZ = 2 * math.pi * 1e6


def se_ok(samples, expected, n_se=3.0):
    samples = np.asarray(samples, float)
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    return abs(samples.mean() - expected) <= n_se * se


def test_criterion_01_rectangular_optimum(acceptance):
    start = time.perf_counter()
    x, eta = analytic.optimal_rectangular(1.0)
    elapsed = time.perf_counter() - start
    ok = abs(x - 2.51286) <= 1e-4 and abs(eta - 0.814529) <= 1e-6
    acceptance(1, ok, f"kappa T = {x:.7f}, efficiency = {eta:.8f} ({elapsed * 1e3:.1f} ms)")
    assert ok


def test_criterion_02_natural_decay_optimum(acceptance):
    start = time.perf_counter()
    at_point = analytic.eff_decreasing_infinite(1.0, 2.0, 2.0).value
    grid = np.linspace(0.02, 4.0, 200)
    eff = np.array([[analytic.eff_decreasing_infinite(1.0, tau, t).value for t in grid] for tau in grid])
    i, j = np.unravel_index(np.argmax(eff), eff.shape)
    elapsed = time.perf_counter() - start
    target = 4 / math.e**2
    dist = math.hypot(grid[i] - 2.0, grid[j] - 2.0)
    ok = abs(at_point - target) <= 1e-9 and abs(eff[i, j] - target) <= 1e-3 and dist <= 1e-3 and elapsed < 10
    acceptance(2, ok, f"eff(2,2) - 4/e^2 = {at_point - target:.1e}; grid max {eff[i, j]:.6f} at "
                      f"(-tau, T) = ({grid[i]:.3f}, {grid[j]:.3f}); {elapsed:.2f} s")
    assert ok


def test_criterion_03_time_reversed_law(acceptance):
    kt = np.linspace(0.1, 20.0, 400)
    vals = np.array([analytic.eff_exponential(1.0, 2.0, t).value for t in kt])
    err = np.max(np.abs(vals + np.expm1(-kt)))
    late = vals[kt >= 5.3]
    ok = err <= 1e-12 and np.all(late >= 0.994)
    acceptance(3, ok, f"max |eff - (1 - exp(-kT))| = {err:.1e}; min over kT >= 5.3 = {late.min():.5f}")
    assert ok


def test_criterion_04_infinite_duration_band(acceptance):
    x = np.linspace(0.05, 20.0, 40_000)
    vals = np.array([analytic.eff_increasing_infinite(1.0, v).value for v in x])
    inside = (x > 0.8) & (x < 5.0)
    band_exact = bool(np.all(vals[inside] > 0.815) and np.all(vals[~inside] <= 0.815))
    ends = [analytic.eff_increasing_infinite(1.0, v).value for v in (0.8, 5.0)]
    ends_ok = all(abs(e - 0.815) <= 1e-3 for e in ends)
    above = x[vals > 0.815]
    ok = band_exact and ends_ok
    acceptance(4, ok, f"endpoints {ends[0]:.6f}, {ends[1]:.6f} (|diff| {abs(ends[0] - 0.815):.2e}); "
                      f"eff > 0.815 on ({above.min():.4f}, {above.max():.4f})")
    assert ok


def test_criterion_05_ode_analytic_agreement(acceptance):
    start = time.perf_counter()
    worst, rows = validation.ode_agreement(50, seed=2024)
    elapsed = time.perf_counter() - start
    families = sorted({fam for fam, _, _ in rows})
    ok = len(rows) == 50 and worst <= 1e-5 and elapsed < 60
    acceptance(5, ok, f"max |ode - analytic| = {worst:.2e} over {len(rows)} configs ({', '.join(families)}); {elapsed:.1f} s")
    assert ok


def test_criterion_06_intrinsic_loss(acceptance):
    worst, rows = validation.intrinsic_loss_agreement(20, seed=2024)
    pref = analytic.loss_prefactor(1 / 50e-9, 1 / 3e-6)
    ok = len(rows) == 20 and worst <= 1e-5 and abs(pref - 60 / 61) <= 1e-12
    acceptance(6, ok, f"max |ode - modified formula| = {worst:.2e} over 20 configs; prefactor {pref:.6f}")
    assert ok


def test_criterion_07_delay_factors(acceptance, unit_frame):
    rng = np.random.default_rng(7)
    drive_first = 0.0
    makers = (
        lambda: PulseSpec.rectangular(rng.uniform(0.5, 6.0)),
        lambda: PulseSpec.exponential(rng.uniform(0.5, 5.0), rng.uniform(1.0, 8.0)),
        lambda: PulseSpec.exponential(-rng.uniform(0.5, 5.0), rng.uniform(1.0, 8.0)),
    )
    for make in makers:
        for _ in range(4):
            p = make()
            delay = rng.uniform(0.01, 1.5)
            ref = dynamics.efficiency_numeric(unit_frame, None, p).efficiency
            late = dynamics.efficiency_numeric(unit_frame, None, p, CouplerSchedule(t_close=p.t_drive + delay)).efficiency
            drive_first = max(drive_first, abs(late / ref - math.exp(-delay)))
    coupler_first = 0.0
    for _ in range(8):
        p = PulseSpec.exponential(rng.choice([-1, 1]) * rng.uniform(0.5, 4.0), rng.uniform(2.0, 8.0))
        t_close = p.t_drive - rng.uniform(0.05, 1.0)
        ref = dynamics.efficiency_numeric(unit_frame, None, p).efficiency
        early = dynamics.efficiency_numeric(unit_frame, None, p, CouplerSchedule(t_close=t_close)).efficiency
        coupler_first = max(coupler_first, abs(early / ref - analytic.delay_factor(1.0, p, t_close, p.t_drive)))
    ok = drive_first <= 1e-4 and coupler_first <= 1e-4
    acceptance(7, ok, f"drive-first factor error {drive_first:.1e}; coupler-first error {coupler_first:.1e}")
    assert ok


def test_criterion_08_detuning(acceptance, unit_frame, lossless):
    rng = np.random.default_rng(8)
    makers = {
        "rect": lambda: PulseSpec.rectangular(rng.uniform(0.5, 6.0)),
        "increasing": lambda: PulseSpec.exponential(rng.uniform(0.5, 5.0), rng.uniform(1.0, 8.0)),
        "decreasing": lambda: PulseSpec.exponential(-rng.uniform(0.5, 5.0), rng.uniform(1.0, 8.0)),
    }
    grid = np.linspace(-2.0, 2.0, 41)
    odd, centred = 0.0, True
    for make in makers.values():
        for _ in range(5):
            base = make()
            e = np.array([
                dynamics.efficiency_numeric(unit_frame, None, replace(base, detuning=float(dw))).efficiency for dw in grid
            ])
            odd = max(odd, float(np.max(np.abs(e - e[::-1]))))
            centred &= int(np.argmax(e)) == 20
    k = lossless.kappa_on
    at_1mhz = min(
        dynamics.efficiency_numeric(lossless, None, PulseSpec.exponential(2 / k, 8 / k, detuning=s * TWO_PI_MHZ)).efficiency
        for s in (-1, 1)
    )
    ratios = []
    for kappa in (1 / 25e-9, 1 / 50e-9, 1 / 75e-9, 1 / 100e-9):
        sys = lossless.with_kappa(kappa)
        ratios.append(dynamics.detuning_half_width(sys, PulseSpec.exponential(2 / kappa, 8 / kappa)) / kappa)
    spread = max(ratios) / min(ratios) - 1
    ok = odd <= 1e-9 and centred and at_1mhz >= 0.90 and spread < 0.10
    acceptance(8, ok, f"max |eff(dw) - eff(-dw)| = {odd:.1e}; peak at 0: {centred}; "
                      f"eff at 1 MHz = {at_1mhz:.4f}; width/kappa = {np.mean(ratios):.4f} (spread {spread:.1e})")
    assert ok


def test_criterion_09_conservation(acceptance, lossless):
    rng = np.random.default_rng(9)
    k = lossless.kappa_on
    worst, worst_phase = 0.0, 0.0
    coeffs = derive_coefficients(lossless)
    for _ in range(10):
        tau = rng.choice([-1, 1]) * rng.uniform(0.5, 5.0) / k
        p = PulseSpec.exponential(tau, rng.uniform(1.0, 10.0) / k) if rng.random() < 0.8 else PulseSpec.rectangular(rng.uniform(0.5, 6.0) / k)
        traj, led = dynamics.simulate(lossless, p, horizon=p.t_drive + 40 / k)
        worst = max(worst, abs(led.e_tot - led.e_res_final - led.e_out) / led.e_tot,
                    abs(led.e_tot - led.e_res - led.e_out_capture) / led.e_tot)
        worst_phase = max(worst_phase, dynamics.phase_opposition_check(traj, coeffs))
    ok = worst <= 0.01 and worst_phase < 1e-6
    acceptance(9, ok, f"max energy residual {worst:.1e} E_tot; max phase deviation {worst_phase:.1e} rad")
    assert ok


def test_criterion_10_estimator_statistics(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    trials, n_s, n_n, sigma = 1000, 500, 500, 1.0
    k = np.arange(n_s)
    env = 0.5 * np.exp(-(((k - n_s / 2) / (n_s / 5)) ** 2))
    i, q = env * np.cos(0.05 * k), env * np.sin(0.05 * k)
    clean = float(np.sum(i**2 + q**2))
    e_sig = np.sum((i + rng.normal(0, sigma, (trials, n_s))) ** 2 + (q + rng.normal(0, sigma, (trials, n_s))) ** 2, axis=1)
    e_n = np.sum(rng.normal(0, sigma, (trials, 2 * n_n)) ** 2, axis=1)
    e_ns = np.array([noise_subtract(s, n_s, NoiseEstimate(n, n_n, n * n / n_n)).value for s, n in zip(e_sig, e_n)])
    e_zero = np.sum(rng.normal(0, sigma, (trials, 2 * n_s)) ** 2, axis=1) - e_n
    forms = estimation.variances_sigma_form(i, q, sigma, sigma, 1.0, n_n)
    var_errs = {
        "E_sig": np.var(e_sig, ddof=1) / forms["sig"] - 1,
        "E_NS": np.var(e_ns, ddof=1) / forms["ns"] - 1,
        "E_N": np.var(e_n, ddof=1) / forms["noise"] - 1,
    }
    unbiased = se_ok(e_ns, clean) and se_ok(e_zero, 0.0)

    # absorption efficiency: windows of 300 and 200 samples, shared noise window
    sig_a, sig_r, n_abs, n_ref = 0.3, 0.06, 300, 200
    ka, kr = np.arange(n_abs), np.arange(n_ref)
    ia = sig_a * np.exp(-(((ka - n_abs / 2) / (n_abs / 5)) ** 2))
    ir = sig_r * np.exp(-(((kr - n_ref / 2) / (n_ref / 5)) ** 2))
    s = 0.02
    etas, preds = [], []
    for _ in range(trials):
        ea = np.sum((ia + rng.normal(0, s, n_abs)) ** 2 + rng.normal(0, s, n_abs) ** 2)
        er = np.sum((ir + rng.normal(0, s, n_ref)) ** 2 + rng.normal(0, s, n_ref) ** 2)
        en = np.sum(rng.normal(0, s, 2 * n_n) ** 2)
        noise = NoiseEstimate(en, n_n, en * en / n_n)
        eta, sd = estimation.absorption_uncertainty(noise_subtract(ea, n_abs, noise), noise_subtract(er, n_ref, noise), noise)
        etas.append(eta)
        preds.append(sd)
    abs_err = np.std(etas, ddof=1) / np.mean(preds) - 1
    elapsed = time.perf_counter() - start
    ok = unbiased and all(abs(v) <= 0.15 for v in var_errs.values()) and abs(abs_err) <= 0.15 and elapsed < 120
    acceptance(10, ok, "unbiased: {}; variance errors {}; absorption std/predicted - 1 = {:+.3f}; {:.1f} s".format(
        unbiased, ", ".join(f"{k} {v:+.3f}" for k, v in var_errs.items()), abs_err, elapsed))
    assert ok


def test_criterion_11_end_to_end_pipeline(acceptance):
    sys = SystemParams.device()
    protocols = {"time-reversed": pipeline.time_reversed(), "natural": pipeline.natural()}
    intervals = {"time-reversed": (0.990, 0.998), "natural": (0.58, 0.64)}
    parts, ok = [], True
    for name, proto in protocols.items():
        m = pipeline.measure(sys, proto, AcquisitionConfig(noise_sigma=0.0), with_off=False)
        diff = abs(m.absorption - m.trajectory_absorption)
        ok &= diff <= 1e-3
        acq = AcquisitionConfig()
        acq = replace(acq, noise_sigma=pipeline.noise_sigma_for_ratio(sys, proto, acq))
        rows = pipeline.monte_carlo_absorption(sys, proto, acq, range(1000, 1200))
        mean, spread, pred = rows[:, 0].mean(), rows[:, 0].std(ddof=1), rows[:, 1].mean()
        lo, hi = intervals[name]
        ok &= lo <= mean <= hi and abs(spread / pred - 1) <= 0.15
        parts.append(f"{name}: noiseless diff {diff:.1e}, noisy {mean:.4f} (interval [{lo}, {hi}]), "
                     f"sigma {pred:.1e} vs MC {spread:.1e}")
    acceptance(11, ok, "; ".join(parts))
    assert ok


def test_criterion_12_gaussian_moments(acceptance):
    rng = np.random.default_rng(12)
    sigma = 1.3
    g = rng.normal(0, sigma, 1_000_000)
    moments_ok = all(
        se_ok(g**p, ((1 + (-1) ** p) / 2) * math.prod(range(p - 1, 0, -2)) * sigma**p) for p in range(1, 7)
    )
    moments_ok &= all(
        estimation.gaussian_moment(p, sigma) == ((1 + (-1) ** p) / 2) * math.prod(range(p - 1, 0, -2)) * sigma**p
        for p in range(7)
    )
    w = rng.uniform(-1, 2, 20)
    gs = rng.normal(0, sigma, (200_000, 20))
    closed = estimation.weighted_sum_moments(w, sigma)
    lin, sq = gs @ w, (gs**2) @ w
    weighted_ok = se_ok(lin**2, closed["linear_second"]) and se_ok(sq**2, closed["square_second"])
    ok = moments_ok and weighted_ok
    acceptance(12, ok, f"moments p <= 6 within 3 SE: {moments_ok}; weighted-sum second moments: {weighted_ok}")
    assert ok
