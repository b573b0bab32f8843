"""Numerical integration of the intra-resonator field ``B(t)``.

The field equation is linear in ``B``::

    dB/dt = (-kappa(t)/2 - kappa_i/2 + i dw) B + c(t) (1/tau_rt + i dw) A(t)

with ``c = t1 conj(r2) / |r|``. One classical RK4 step is therefore an affine
map ``B -> R_n B + u_n``; the coefficients of every step are computed at once
with numpy and only the scalar recurrence runs in Python.

The output grid is uniform. Drive stop, coupler close/reopen and ramp ends are
"breakpoints": a grid step that contains one is split into two exact sub-steps,
so no RK4 stage straddles a discontinuity.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import analytic
from .coremodel import (
    CouplerCoefficients,
    CouplerSchedule,
    PulseSpec,
    Shape,
    SystemParams,
    coefficient_arrays,
)

STEP_FRACTION = 0.01
ERROR_TOLERANCE = 1e-9
MAX_REFINEMENTS = 8


class StepSizeError(ValueError):
    """Step-halving error estimate exceeded the tolerance; use a smaller dt."""


@dataclass(frozen=True)
class FieldTrajectory:
    times: np.ndarray
    a_drive: np.ndarray
    b_field: np.ndarray
    v_out: np.ndarray
    kappa_of_t: np.ndarray
    dt: float

    def __post_init__(self):
        n = len(self.times)
        if n < 2 or any(len(x) != n for x in (self.a_drive, self.b_field, self.v_out, self.kappa_of_t)):
            raise ValueError("trajectory arrays must share a length >= 2")

    def to_csv(self, path: str | Path, config: dict | None = None) -> None:
        write_csv(
            path,
            ["t", "re_a", "im_a", "re_b", "im_b", "re_vout", "im_vout", "kappa"],
            np.column_stack(
                [
                    self.times,
                    self.a_drive.real, self.a_drive.imag,
                    self.b_field.real, self.b_field.imag,
                    self.v_out.real, self.v_out.imag,
                    self.kappa_of_t,
                ]
            ),
            config,
        )


@dataclass(frozen=True)
class EnergyLedger:
    """Energies in units of J (volts^2 s / ohm); ratios are what matter.

    ``e_res`` is the resonator energy when the coupler closes, ``e_tot`` the
    drive energy, ``e_out`` the output-wave energy over the whole horizon and
    ``e_out_capture`` the part emitted before the coupler closes.
    ``e_res_final`` is the resonator energy at the end of the horizon.
    """

    e_res: float
    e_tot: float
    e_out: float
    e_lost: float
    efficiency: float
    e_res_final: float
    e_out_capture: float

    @property
    def conservation_residual(self) -> float:
        """``(E_tot - E_res,final - E_out - E_lost) / E_tot``."""
        return (self.e_tot - self.e_res_final - self.e_out - self.e_lost) / self.e_tot

    @property
    def absorption(self) -> float:
        """Stored fraction of everything that left or stayed: ``E_res / (E_res + E_out,capture)``."""
        return self.e_res / (self.e_res + self.e_out_capture)


def default_dt(sys: SystemParams, pulse: PulseSpec, horizon: float) -> float:
    bounds = [STEP_FRACTION / sys.kappa_on, STEP_FRACTION * horizon]
    if pulse.shape is Shape.EXPONENTIAL:
        bounds.append(STEP_FRACTION * abs(pulse.tau))
    if pulse.detuning:
        bounds.append(STEP_FRACTION / abs(pulse.detuning))
    return min(bounds)


def default_horizon(sys: SystemParams, pulse: PulseSpec, schedule: CouplerSchedule) -> float:
    end = max(pulse.t_drive, schedule.t_close)
    if schedule.t_reopen is not None:
        end = max(end, schedule.t_reopen + schedule.ramp)
    return end + 5.0 / sys.kappa_on


@dataclass
class _Solution:
    times: np.ndarray          # uniform grid
    b_grid: np.ndarray
    b_at: dict                 # breakpoint time -> B
    e_tot: float
    e_out_cum: np.ndarray      # cumulative output energy at every node
    e_lost: float
    nodes: np.ndarray


def _nodes(horizon: float, n_steps: int, breakpoints) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(0.0, horizon, n_steps + 1)
    snap = 1e-12 * horizon
    extra = [b for b in breakpoints if 0 < b < horizon and np.min(np.abs(grid - b)) > snap]
    nodes = np.union1d(grid, np.asarray(extra, dtype=float))
    grid_index = np.searchsorted(nodes, grid)
    return nodes, grid_index


def _solve(
    sys: SystemParams,
    phase_t1: float,
    pulse: PulseSpec,
    schedule: CouplerSchedule,
    horizon: float,
    n_steps: int,
    b0: complex,
    literal_detuning: bool,
) -> _Solution:
    bps = [pulse.t_drive, *schedule.breakpoints()]
    nodes, grid_index = _nodes(horizon, n_steps, bps)
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    mid = 0.5 * (a + b)
    stage_t = np.stack([a, mid, b])                    # (3, M)

    drive_on = (mid >= 0) & (mid <= pulse.t_drive)
    amp = pulse.shape_values(stage_t) * drive_on      # piece chosen by step midpoint

    if schedule.ramp > 0:
        kappa = schedule.kappa_at(stage_t, sys.kappa_on)
    else:
        kappa = np.broadcast_to(schedule.kappa_at(mid, sys.kappa_on), stage_t.shape)
    t1, t2, r1, r2, r_mag = coefficient_arrays(sys, kappa, phase_t1)
    coupling = t1 * np.conj(r2) / r_mag
    dw = pulse.detuning
    drive_factor = (1.0 / sys.tau_rt + dw) if literal_detuning else (1.0 / sys.tau_rt + 1j * dw)
    lam = -0.5 * kappa - 0.5 * sys.kappa_i + 1j * dw
    g = coupling * drive_factor * amp

    # RK4 stages as affine functions (coef * B_n + const) of the step's initial value.
    l0, lm, l1 = lam
    g0, gm, g1 = g
    half = 0.5 * h
    y1c, y1d = np.ones_like(l0), np.zeros_like(g0)
    k1c, k1d = l0, g0
    y2c, y2d = 1 + half * k1c, half * k1d
    k2c, k2d = lm * y2c, lm * y2d + gm
    y3c, y3d = 1 + half * k2c, half * k2d
    k3c, k3d = lm * y3c, lm * y3d + gm
    y4c, y4d = 1 + h * k3c, h * k3d
    k4c, k4d = l1 * y4c, l1 * y4d + g1
    step_r = 1 + h / 6 * (k1c + 2 * k2c + 2 * k3c + k4c)
    step_u = h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)

    bn = [complex(b0)]
    append = bn.append
    cur = complex(b0)
    for rr, uu in zip(step_r.tolist(), step_u.tolist()):
        cur = rr * cur + uu
        append(cur)
    b_nodes = np.asarray(bn)
    bs = b_nodes[:-1]

    stages = [y1c * bs + y1d, y2c * bs + y2d, y3c * bs + y3d, y4c * bs + y4d]
    stage_idx = (0, 1, 1, 2)
    weights = (1.0, 2.0, 2.0, 1.0)
    out_pow = np.zeros_like(h)
    lost_pow = np.zeros_like(h)
    for y, si, w in zip(stages, stage_idx, weights):
        v = r1[si] * amp[si] + t2[si] * y
        out_pow += w * np.abs(v) ** 2
        lost_pow += w * np.abs(y) ** 2
    drive_pow = amp[0] ** 2 + 4 * amp[1] ** 2 + amp[2] ** 2
    out_e = h / 6 * out_pow / (2 * sys.r1_impedance)
    lost_e = h / 6 * lost_pow * sys.kappa_i * sys.tau_rt / (2 * sys.r2_impedance)
    e_tot = float(np.sum(h / 6 * drive_pow)) / (2 * sys.r1_impedance)

    b_at = {float(t): b_nodes[_node_index(nodes, t)] for t in bps if 0 <= t <= horizon}
    b_at[0.0] = b_nodes[0]
    return _Solution(
        times=nodes[grid_index],
        b_grid=b_nodes[grid_index],
        b_at=b_at,
        e_tot=e_tot,
        e_out_cum=np.concatenate([[0.0], np.cumsum(out_e)]),
        e_lost=float(np.sum(lost_e)),
        nodes=nodes,
    )


def _node_index(nodes: np.ndarray, t: float) -> int:
    return int(np.argmin(np.abs(nodes - t)))


def _check_step(sys, pulse, schedule, horizon, dt):
    if horizon < schedule.t_close:
        raise ValueError("horizon must reach t_close")
    if math.isfinite(pulse.t_drive) and horizon < pulse.t_drive:
        raise ValueError("horizon must cover the whole drive")
    limit = default_dt(sys, pulse, horizon)
    if dt is None:
        return limit
    if not 0 < dt <= limit * (1 + 1e-9):
        raise ValueError(f"dt={dt:.3g} exceeds the stability/accuracy bound {limit:.3g}")
    return dt


def _phase(coeffs: CouplerCoefficients | None) -> float:
    if coeffs is None or coeffs.t1 == 0:
        return 0.0
    return float(np.angle(coeffs.t1))


def _run(sys, coeffs, pulse, schedule, horizon, dt, b0, check_error, literal_detuning):
    """Integrate, halving the default step until the error estimate passes.

    A caller-supplied ``dt`` is never refined: if it fails the check the run
    is rejected with :class:`StepSizeError`.
    """
    if math.isinf(pulse.t_drive):
        raise ValueError("numerical integration needs a finite drive")
    horizon = default_horizon(sys, pulse, schedule) if horizon is None else horizon
    fixed = dt is not None
    dt = _check_step(sys, pulse, schedule, horizon, dt)
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    phase = _phase(coeffs)
    sol = _solve(sys, phase, pulse, schedule, horizon, n_steps, b0, literal_detuning)
    if not check_error:
        return sol, phase
    for level in range(MAX_REFINEMENTS + 1):
        fine = _solve(sys, phase, pulse, schedule, horizon, 2 * n_steps, b0, literal_detuning)
        scale = np.max(np.abs(fine.b_grid))
        err = np.max(np.abs(fine.b_grid[::2] - sol.b_grid)) / 15.0 if scale > 0 else 0.0
        if err <= ERROR_TOLERANCE * scale:
            return sol, phase
        if fixed or level == MAX_REFINEMENTS:
            break
        sol, n_steps = fine, 2 * n_steps
    raise StepSizeError(f"step-halving error {err / scale:.2e} exceeds {ERROR_TOLERANCE:g} of max|B| at dt={horizon / n_steps:.3g}")


def _trajectory(sys, phase, pulse, schedule, sol: _Solution) -> FieldTrajectory:
    t = sol.times
    a = np.asarray(_envelope(pulse, t), dtype=complex)
    kappa = np.asarray(schedule.kappa_at(t, sys.kappa_on), dtype=float)
    _, t2, r1, _, _ = coefficient_arrays(sys, kappa, phase)
    v = r1 * a + t2 * sol.b_grid
    return FieldTrajectory(t, a, sol.b_grid, v, kappa, float(t[1] - t[0]))


def _envelope(pulse, t):
    # right limit at every node, like kappa_at: off at t == t_drive
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0) & (t < pulse.t_drive), pulse.shape_values(t), 0.0)


def integrate_field(
    sys: SystemParams,
    coeffs: CouplerCoefficients | None,
    pulse: PulseSpec,
    schedule: CouplerSchedule,
    horizon: float | None = None,
    dt: float | None = None,
    b0: complex = 0.0,
    check_error: bool = True,
    literal_detuning: bool = False,
) -> FieldTrajectory:
    """Integrate the resonator field on a uniform grid.

    ``coeffs`` only supplies the global phase of ``t1``; the coefficients are
    recomputed from the scheduled coupling at every RK4 stage. ``dt`` defaults
    to ``0.01 * min(1/kappa_on, |tau|, 1/|detuning|, horizon)`` and larger
    steps are rejected. With ``check_error`` the run is repeated at ``dt/2``
    and :class:`StepSizeError` raised if the Richardson estimate exceeds
    ``1e-9 max|B|``.

    ``literal_detuning`` uses ``dw * c * A`` for the detuning correction to the
    drive term instead of ``i dw * c * A`` (the first-order expansion of
    ``exp(i tau_rt dw)``); the latter keeps the efficiency even in ``dw``.
    """
    sol, phase = _run(sys, coeffs, pulse, schedule, horizon, dt, b0, check_error, literal_detuning)
    return _trajectory(sys, phase, pulse, schedule, sol)


def simulate(
    sys: SystemParams,
    pulse: PulseSpec,
    schedule: CouplerSchedule | None = None,
    coeffs: CouplerCoefficients | None = None,
    horizon: float | None = None,
    dt: float | None = None,
    b0: complex = 0.0,
    check_error: bool = True,
    literal_detuning: bool = False,
) -> tuple[FieldTrajectory, EnergyLedger]:
    """Trajectory and energy ledger in one integration."""
    schedule = CouplerSchedule.closing_with_drive(pulse) if schedule is None else schedule
    sol, phase = _run(sys, coeffs, pulse, schedule, horizon, dt, b0, check_error, literal_detuning)
    if sol.e_tot <= 0:
        raise ValueError("empty drive: total drive energy is zero")
    energy = sys.tau_rt / (2 * sys.r2_impedance)
    e_res = abs(sol.b_at[float(schedule.t_close)]) ** 2 * energy
    close_node = _node_index(sol.nodes, schedule.t_close)
    ledger = EnergyLedger(
        e_res=e_res,
        e_tot=sol.e_tot,
        e_out=float(sol.e_out_cum[-1]),
        e_lost=sol.e_lost,
        efficiency=e_res / sol.e_tot,
        e_res_final=abs(sol.b_grid[-1]) ** 2 * energy,
        e_out_capture=float(sol.e_out_cum[close_node]),
    )
    return _trajectory(sys, phase, pulse, schedule, sol), ledger


def efficiency_numeric(
    sys: SystemParams,
    coeffs: CouplerCoefficients | None,
    pulse: PulseSpec,
    schedule: CouplerSchedule | None = None,
    **kw,
) -> EnergyLedger:
    """Receiver efficiency ``E_res(t_close) / E_tot`` from the integrated field."""
    return simulate(sys, pulse, schedule, coeffs, **kw)[1]


def phase_opposition_check(trajectory: FieldTrajectory, coeffs: CouplerCoefficients) -> float:
    """Largest deviation from pi between the reflected ``r1 A`` and re-emitted ``t2 B`` waves.

    Only grid points with the drive on, the coupler open and
    ``|B| > 1e-6 max|B|`` are compared.
    """
    b = trajectory.b_field
    a = trajectory.a_drive
    kappa = trajectory.kappa_of_t
    mask = (np.abs(b) > 1e-6 * np.max(np.abs(b))) & (np.abs(a) > 0) & (kappa > 0)
    if not np.any(mask):
        return 0.0
    reflected = coeffs.rr1 * a[mask]
    emitted = coeffs.t2 * b[mask]
    diff = np.angle(reflected) - np.angle(emitted) - np.pi
    diff = (diff + np.pi) % (2 * np.pi) - np.pi
    return float(np.max(np.abs(diff)))


# --- scans -----------------------------------------------------------------

SCAN_AXES = ("T", "T_drive", "tau", "detuning", "delay", "kappa", "T1")


@dataclass(frozen=True)
class ScanPoint:
    params: dict
    efficiency: float
    method: str
    error: str = ""


@dataclass
class ScanResult:
    family: str
    base: dict
    axes: dict
    points: list = field(default_factory=list)
    relative: bool = False

    def column(self, name: str) -> np.ndarray:
        if name == "efficiency":
            return np.array([p.efficiency for p in self.points])
        return np.array([p.params[name] for p in self.points])

    def to_csv(self, path: str | Path, config: dict | None = None, normalized: bool = False) -> None:
        names = list(self.axes)
        eff = self.column("efficiency")
        header = [*names, "efficiency", "method", "error"]
        if normalized:
            header.insert(len(names) + 1, "efficiency_norm")
            peak = np.nanmax(eff) if np.any(np.isfinite(eff)) else 1.0
        rows = []
        for p in self.points:
            row = [repr(float(p.params[n])) for n in names] + [repr(float(p.efficiency))]
            if normalized:
                row.append(repr(float(p.efficiency / peak)))
            rows.append(row + [p.method, p.error])
        path = Path(path)
        with path.open("w", newline="") as fh:
            if config is not None:
                fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def sidecar(self) -> dict:
        return {
            "family": self.family,
            "base": self.base,
            "axes": {k: list(map(float, v)) for k, v in self.axes.items()},
            "relative": self.relative,
            "n_points": len(self.points),
            "n_failed": sum(1 for p in self.points if p.error),
        }


_TIME_AXES = ("T", "T_drive", "tau", "delay", "T1")


def _point_inputs(sys: SystemParams, family: str, base: dict, point: dict, relative: bool = False):
    p = {**base, **point}
    kappa = float(p.get("kappa", sys.kappa_on))
    if relative:
        p = {k: (v / kappa if k in _TIME_AXES else v) for k, v in p.items()}
    kappa_i = 1.0 / p["T1"] if "T1" in p and math.isfinite(p["T1"]) else sys.kappa_i
    sysp = SystemParams(
        omega=sys.omega,
        r1_impedance=sys.r1_impedance,
        r2_impedance=sys.r2_impedance,
        kappa_on=kappa,
        kappa_i=kappa_i,
        tau_rt=sys.tau_rt,
    )
    t_drive = p.get("T_drive", p.get("T"))
    if t_drive is None:
        raise ValueError("scan point needs T or T_drive")
    if "delay" in p:
        t_close = t_drive + p["delay"]
    else:
        t_close = p.get("T", t_drive)
    detuning = p.get("detuning", 0.0)
    if family in ("rect", "rectangular"):
        pulse = PulseSpec.rectangular(t_drive, detuning=detuning)
    elif family in ("exp", "exponential", "increasing", "decreasing"):
        tau = p["tau"]
        if family == "decreasing":
            tau = -abs(tau)
        elif family == "increasing":
            tau = abs(tau)
        pulse = PulseSpec.exponential(tau, t_drive, detuning=detuning)
    else:
        raise ValueError(f"unknown pulse family {family!r}")
    return sysp, pulse, CouplerSchedule(t_close=max(t_close, 0.0)), p


def _evaluate_point(args):
    sys, family, base, point, method, dt_scale, relative = args
    try:
        sysp, pulse, schedule, _ = _point_inputs(sys, family, base, point, relative)
        if method in ("auto", "analytic"):
            try:
                res = analytic.efficiency(sysp.kappa_on, pulse, schedule.t_close, sysp.kappa_i)
                return ScanPoint(point, res.value, "analytic")
            except NotImplementedError:
                if method == "analytic":
                    raise
        horizon = default_horizon(sysp, pulse, schedule)
        dt = default_dt(sysp, pulse, horizon) * dt_scale
        led = efficiency_numeric(sysp, None, pulse, schedule, horizon=horizon, dt=dt)
        return ScanPoint(point, led.efficiency, "ode")
    except Exception as exc:  # flagged row, not an abort
        return ScanPoint(point, float("nan"), method, f"{type(exc).__name__}: {exc}")


def scan_grid(
    sys: SystemParams,
    family: str,
    axes: dict,
    base: dict | None = None,
    method: str = "auto",
    workers: int = 1,
    max_points: int = 250_000,
    dt_scale: float = 1.0,
    relative: bool = False,
) -> ScanResult:
    """Efficiency on the Cartesian product of ``axes``.

    Axis names: ``T`` (coupler close), ``T_drive``, ``tau``, ``detuning``,
    ``delay`` (``T - T_drive``), ``kappa``, ``T1``. ``base`` supplies fixed
    values. Rows follow ``itertools.product`` order of the axes as given.
    ``method='auto'`` uses a closed form when one is exact, else the ODE.
    With ``relative`` all times are in units of ``1/kappa`` (``kappa`` from
    the axis, ``base`` or ``sys``); the detuning stays in rad/s.
    """
    base = dict(base or {})
    unknown = (set(axes) | set(base)) - set(SCAN_AXES)
    if unknown:
        raise ValueError(f"unknown scan axes: {sorted(unknown)}")
    axes = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in axes.items()}
    n = int(np.prod([len(v) for v in axes.values()]))
    if n > max_points:
        raise ValueError(f"grid of {n} points exceeds max_points={max_points}")
    names = list(axes)
    points = [dict(zip(names, map(float, combo))) for combo in product(*axes.values())]
    jobs = [(sys, family, base, pt, method, dt_scale, relative) for pt in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_evaluate_point(j) for j in jobs]
    return ScanResult(family, base, axes, results, relative)


def half_max_width(x: np.ndarray, y: np.ndarray, level: float = 0.5) -> float:
    """Full width of the region around the peak where ``y / max(y) >= level``.

    Crossings are linearly interpolated; returns nan if the region touches the
    grid edge.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    r = y / np.nanmax(y)
    i = int(np.nanargmax(r))
    lo = i
    while lo > 0 and r[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < len(r) - 1 and r[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == len(r) - 1:
        return float("nan")
    xl = np.interp(level, [r[lo - 1], r[lo]], [x[lo - 1], x[lo]])
    xh = np.interp(level, [r[hi + 1], r[hi]], [x[hi + 1], x[hi]])
    return float(xh - xl)


def detuning_half_width(sys: SystemParams, pulse: PulseSpec, schedule: CouplerSchedule | None = None, level=0.5):
    """Full detuning width (rad/s) where efficiency falls to ``level`` of its on-resonance value.

    Root-finds on the ODE efficiency; relies on evenness in the detuning.
    """
    schedule = CouplerSchedule.closing_with_drive(pulse) if schedule is None else schedule

    def eff(dw):
        p = PulseSpec(pulse.shape, pulse.t_drive, pulse.amplitude, pulse.tau, dw)
        return efficiency_numeric(sys, None, p, schedule, check_error=False).efficiency

    peak = eff(0.0)
    hi = sys.kappa_on
    while eff(hi) > level * peak:
        hi *= 2
        if hi > 1e3 * sys.kappa_on:
            raise ValueError("efficiency does not fall to the requested level")
    return 2 * brentq(lambda d: eff(d) - level * peak, 0.0, hi, xtol=1e-10 * sys.kappa_on)


def write_csv(path, header, data, config=None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.asarray(data):
            w.writerow([repr(float(x)) for x in row])


def ledger_dict(ledger: EnergyLedger) -> dict:
    d = asdict(ledger)
    d["absorption"] = ledger.absorption
    d["conservation_residual"] = ledger.conservation_residual
    return d


def analytic_reference(sys: SystemParams, pulse: PulseSpec, schedule: CouplerSchedule) -> float:
    """Closed-form counterpart of :func:`efficiency_numeric` (raises if none exists)."""
    if schedule.ramp or schedule.kappa_off:
        raise NotImplementedError("no closed form for ramped or leaky coupler schedules")
    return analytic.efficiency(sys.kappa_on, pulse, schedule.t_close, sys.kappa_i).value


__all__ = [
    "FieldTrajectory",
    "EnergyLedger",
    "StepSizeError",
    "integrate_field",
    "simulate",
    "efficiency_numeric",
    "phase_opposition_check",
    "scan_grid",
    "ScanResult",
    "ScanPoint",
    "half_max_width",
    "detuning_half_width",
]
