"""Monte Carlo and cross-method checks, grouped into suites.

Each check returns a :class:`Check` with the measured value, the threshold it
is held to and a verdict. Suites are deterministic given the seed.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import analytic, dynamics, estimation
from .coremodel import CouplerSchedule, PulseSpec, SystemParams, derive_coefficients

SUITES = ("statistics", "analytic", "conservation")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(d["passed"])
        d["value"] = float(d["value"])
        d["threshold"] = float(d["threshold"])
        return d


def _within_se(samples: np.ndarray, expected: float, n_se: float = 3.0) -> tuple[bool, float]:
    """``|mean - expected|`` in standard errors."""
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    z = abs(samples.mean() - expected) / se if se > 0 else (0.0 if samples.mean() == expected else math.inf)
    return z <= n_se, z


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# --- statistics --------------------------------------------------------------

def _test_signal(n: int, amplitude: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(n)
    env = amplitude * np.exp(-k / (n / 3))
    return env * np.cos(0.05 * k), env * np.sin(0.05 * k)


def _energies(rng, i, q, sigma, n_noise, trials, dt=1.0):
    n_s = len(i)
    x = rng.normal(0.0, sigma, (trials, n_s))
    y = rng.normal(0.0, sigma, (trials, n_s))
    e_sig = dt * np.sum((i + x) ** 2 + (q + y) ** 2, axis=1)
    nx = rng.normal(0.0, sigma, (trials, n_noise))
    ny = rng.normal(0.0, sigma, (trials, n_noise))
    e_n = dt * np.sum(nx**2 + ny**2, axis=1)
    return e_sig, e_n


def gaussian_moment_checks(rng, trials: int, sigma: float = 1.3) -> list[Check]:
    g = rng.normal(0.0, sigma, trials)
    out = []
    for p in range(1, 7):
        ok, z = _within_se(g**p, estimation.gaussian_moment(p, sigma))
        out.append(Check(f"gaussian_moment_p{p}", ok, z, 3.0, "standard errors"))
    w = rng.uniform(0.2, 1.5, 8)
    gs = rng.normal(0.0, sigma, (trials, len(w)))
    m = estimation.weighted_sum_moments(w, sigma)
    lin, sq = gs @ w, (gs**2) @ w
    for name, samples, expected in (
        ("weighted_linear_second", lin**2, m["linear_second"]),
        ("weighted_square_mean", sq, m["square_mean"]),
        ("weighted_square_second", sq**2, m["square_second"]),
    ):
        ok, z = _within_se(samples, expected)
        out.append(Check(name, ok, z, 3.0, "standard errors"))
    return out


def estimator_checks(rng, trials: int, sigma: float = 1.0, n_points: int = 500) -> list[Check]:
    out = []
    n_n = n_points
    # zero signal: unbiased subtraction
    zero = np.zeros(n_points)
    e_sig, e_n = _energies(rng, zero, zero, sigma, n_n, trials)
    ns = e_sig - e_n * n_points / n_n
    ok, z = _within_se(ns, 0.0)
    out.append(Check("noise_subtraction_unbiased_zero_signal", ok, z, 3.0, "standard errors"))
    ok, z = _within_se(e_n, 2 * n_n * sigma**2)
    out.append(Check("noise_energy_mean", ok, z, 3.0, "standard errors"))
    r = _rel(e_n.var(ddof=1), e_n.mean() ** 2 / n_n)
    out.append(Check("noise_energy_variance", r <= 0.15, r, 0.15, "relative to <E_N>^2/N_N"))

    # deterministic signal
    i, q = _test_signal(n_points)
    e_sig, e_n = _energies(rng, i, q, sigma, n_n, trials)
    exp = estimation.expected_energies(i, q, sigma, sigma, 1.0, n_n)
    ns = e_sig - e_n * n_points / n_n
    ok, z = _within_se(ns, exp["clean"])
    out.append(Check("noise_subtraction_unbiased_signal", ok, z, 3.0, "standard errors"))
    noise = estimation.NoiseEstimate(exp["noise"], n_n, exp["noise"] ** 2 / n_n)
    pred_sig = estimation.raw_signal_variance(exp["clean"], n_points, noise)
    pred_ns = estimation.noise_subtract(exp["clean"] + n_points / n_n * exp["noise"], n_points, noise).variance
    for name, samples, pred in (
        ("variance_e_sig", e_sig, pred_sig),
        ("variance_e_ns", ns, pred_ns),
        ("variance_e_n", e_n, noise.variance),
    ):
        r = _rel(samples.var(ddof=1), pred)
        out.append(Check(name, r <= 0.15, r, 0.15, "relative to closed form"))
    return out


def absorption_trials(rng, trials: int, sigma: float, n_abs: int = 300, n_ref: int = 200, n_noise: int = 500):
    """Absorption estimates with i.i.d. noise for a mostly-absorbed signal.

    Returns ``(estimates, predicted_sigma_at_truth, plug_in_sigmas)``.
    """
    i_a, q_a = _test_signal(n_abs, 0.3)
    k = np.arange(n_ref)
    i_r = 0.02 * np.exp(-k / 40.0)
    q_r = np.zeros(n_ref)
    e_a, e_n = _energies(rng, i_a, q_a, sigma, n_noise, trials)
    e_r, _ = _energies(rng, i_r, q_r, sigma, 1, trials)
    etas, sig = np.empty(trials), np.empty(trials)
    for t in range(trials):
        noise = estimation.NoiseEstimate(e_n[t], n_noise, e_n[t] ** 2 / n_noise)
        a = estimation.noise_subtract(e_a[t], n_abs, noise)
        r = estimation.noise_subtract(e_r[t], n_ref, noise)
        etas[t], sig[t] = estimation.absorption_uncertainty(a, r, noise)
    ea = estimation.expected_energies(i_a, q_a, sigma, sigma, 1.0, n_noise)
    er = estimation.expected_energies(i_r, q_r, sigma, sigma, 1.0, n_noise)
    noise = estimation.NoiseEstimate(ea["noise"], n_noise, ea["noise"] ** 2 / n_noise)
    a = estimation.EnergyEstimate(ea["clean"], n_abs, 0.0)
    r = estimation.EnergyEstimate(er["clean"], n_ref, 0.0)
    return etas, estimation.absorption_uncertainty(a, r, noise)[1], sig


def absorption_checks(rng, trials: int, sigma: float = 0.02) -> list[Check]:
    etas, pred, _ = absorption_trials(rng, trials, sigma)
    r = _rel(etas.std(ddof=1), pred)
    return [Check("absorption_sigma", r <= 0.15, r, 0.15, "empirical std relative to propagated sigma")]


def statistics_suite(trials: int = 1000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return gaussian_moment_checks(rng, max(trials, 1000) * 20) + estimator_checks(rng, trials) + absorption_checks(rng, trials)


# --- analytic vs ODE ---------------------------------------------------------

def random_configs(n: int, seed: int = 0) -> list[tuple[str, PulseSpec, CouplerSchedule]]:
    """Lossless on-resonance configurations in the kappa = 1 frame, cycling the families."""
    rng = np.random.default_rng(seed)
    families = ("rect", "increasing", "decreasing", "decreasing_infinite", "drive_first", "coupler_first")
    out = []
    for k in range(n):
        fam = families[k % len(families)]
        if fam == "rect":
            pulse = PulseSpec.rectangular(rng.uniform(0.2, 8.0))
            sched = CouplerSchedule.closing_with_drive(pulse)
        elif fam == "increasing":
            pulse = PulseSpec.exponential(rng.uniform(0.3, 6.0), rng.uniform(0.5, 12.0))
            sched = CouplerSchedule.closing_with_drive(pulse)
        elif fam == "decreasing":
            pulse = PulseSpec.exponential(-rng.uniform(0.3, 6.0), rng.uniform(0.5, 8.0))
            sched = CouplerSchedule.closing_with_drive(pulse)
        elif fam == "decreasing_infinite":
            pulse = PulseSpec.exponential(-rng.uniform(0.3, 3.0), math.inf)
            sched = CouplerSchedule(t_close=rng.uniform(0.3, 5.0))
        elif fam == "drive_first":
            pulse = PulseSpec.exponential(rng.choice([-1, 1]) * rng.uniform(0.5, 4.0), rng.uniform(1.0, 8.0))
            sched = CouplerSchedule(t_close=pulse.t_drive + rng.uniform(0.05, 2.0))
        else:
            pulse = PulseSpec.exponential(rng.choice([-1, 1]) * rng.uniform(0.5, 4.0), rng.uniform(1.0, 8.0))
            sched = CouplerSchedule(t_close=pulse.t_drive - rng.uniform(0.05, 0.9) * pulse.t_drive)
        out.append((fam, pulse, sched))
    return out


def finite_drive(pulse: PulseSpec, t_close: float) -> PulseSpec:
    """Truncate a never-ending decaying drive where its remaining energy is ``exp(-80)``."""
    if math.isfinite(pulse.t_drive):
        return pulse
    return PulseSpec.exponential(pulse.tau, t_close + 40.0 * abs(pulse.tau), pulse.amplitude, pulse.detuning)


def _ode_vs_analytic(args):
    sys, fam, pulse, sched = args
    ref = analytic.efficiency(sys.kappa_on, pulse, sched.t_close, sys.kappa_i).value
    led = dynamics.efficiency_numeric(sys, None, finite_drive(pulse, sched.t_close), sched)
    return fam, led.efficiency, ref


def _map(func, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, jobs))
    return [func(j) for j in jobs]


def ode_agreement(n: int = 50, seed: int = 0, workers: int = 1, sys: SystemParams | None = None) -> tuple[float, list]:
    sys = SystemParams.device(lossless=True).scaled() if sys is None else sys
    jobs = [(sys, fam, p, s) for fam, p, s in random_configs(n, seed)]
    rows = _map(_ode_vs_analytic, jobs, workers)
    return max(abs(a - b) for _, a, b in rows), rows


def intrinsic_loss_agreement(n: int = 20, seed: int = 0, workers: int = 1) -> tuple[float, list]:
    """ODE with ``kappa_i > 0`` against the stretched lossless formula times the prefactor."""
    rng = np.random.default_rng(seed + 1)
    base = SystemParams.device(lossless=True).scaled()
    jobs, refs = [], []
    for k in range(n):
        t1 = rng.uniform(2.0, 200.0)
        sys = SystemParams(base.omega, base.r1_impedance, base.r2_impedance, 1.0, 1.0 / t1, base.tau_rt)
        if k % 2:
            pulse = PulseSpec.rectangular(rng.uniform(0.5, 6.0))
            ref = analytic.apply_intrinsic_loss("rectangular", 1.0, t1, t_pulse=pulse.t_drive).value
        else:
            pulse = PulseSpec.exponential(rng.choice([-1, 1]) * rng.uniform(0.5, 4.0), rng.uniform(1.0, 8.0))
            ref = analytic.apply_intrinsic_loss("exponential", 1.0, t1, tau=pulse.tau, t_close=pulse.t_drive).value
        jobs.append((sys, "lossy", pulse, CouplerSchedule.closing_with_drive(pulse)))
        refs.append(ref)
    rows = _map(_ode_vs_analytic, jobs, workers)
    return max(abs(r[1] - ref) for r, ref in zip(rows, refs)), rows


def analytic_suite(n_configs: int = 50, seed: int = 0, workers: int = 1) -> list[Check]:
    err, _ = ode_agreement(n_configs, seed, workers)
    loss_err, _ = intrinsic_loss_agreement(20, seed, workers)
    x, eta = analytic.optimal_rectangular(1.0)
    tr = max(
        abs(analytic.eff_exponential(1.0, 2.0, t).value + math.expm1(-t)) for t in np.linspace(0.1, 20.0, 200)
    )
    return [
        Check("ode_vs_analytic", err <= 1e-5, err, 1e-5, "max |difference|"),
        Check("intrinsic_loss", loss_err <= 1e-5, loss_err, 1e-5, "max |difference|"),
        Check("rectangular_optimum", abs(eta - 0.8145287552) <= 1e-6, abs(eta - 0.8145287552), 1e-6, f"kappa T = {x:.6f}"),
        Check("time_reversed_law", tr <= 1e-12, tr, 1e-12, "max |eff - (1 - exp(-kappa T))|"),
    ]


# --- conservation ------------------------------------------------------------

def conservation_suite(trials: int = 12, seed: int = 0, workers: int = 1) -> list[Check]:
    """Energy balance at device parameters (lossless) and reflected/re-emitted phase opposition."""
    sys = SystemParams.device(lossless=True)
    k = sys.kappa_on
    worst, worst_phase = 0.0, 0.0
    for fam, p, s in random_configs(trials, seed):
        pulse = finite_drive(PulseSpec(p.shape, p.t_drive / k, tau=p.tau / k), s.t_close / k)
        sched = CouplerSchedule(t_close=s.t_close / k)
        traj, led = dynamics.simulate(sys, pulse, sched)
        worst = max(worst, led.conservation_residual)
        worst_phase = max(worst_phase, dynamics.phase_opposition_check(traj, derive_coefficients(sys)))
    return [
        Check("energy_balance", worst <= 0.01, worst, 0.01, "max |E_tot - E_res - E_out| / E_tot"),
        Check("phase_opposition", worst_phase < 1e-6, worst_phase, 1e-6, "max deviation from pi (rad)"),
    ]


def run_suites(names, trials: int = 1000, seed: int = 0, workers: int = 1) -> dict:
    """JSON-ready verdict ``{suite: {check: {...}}, "passed": bool}``."""
    names = SUITES if "all" in names else names
    out = {}
    for name in names:
        if name == "statistics":
            checks = statistics_suite(trials, seed)
        elif name == "analytic":
            checks = analytic_suite(50, seed, workers)
        elif name == "conservation":
            checks = conservation_suite(12, seed, workers)
        else:
            raise ValueError(f"unknown suite {name!r}")
        out[name] = {c.name: c.to_dict() for c in checks}
    out["passed"] = all(c["passed"] for s in out.values() if isinstance(s, dict) for c in s.values())
    return out
