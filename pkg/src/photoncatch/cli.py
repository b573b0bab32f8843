"""Command-line front end.

Subcommands: ``coeffs``, ``efficiency``, ``scan``, ``simulate``, ``estimate``,
``validate``. Any subcommand accepts ``--config file.json`` whose keys are the
option names (``kappaT``, ``tau_ns``, ...); flags given on the command line
override the file. Exit codes: 0 success, 1 usage, 2 numeric failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analytic, dynamics, estimation, pipeline, signalsim, validation
from .coremodel import (
    DEVICE_FREQUENCY_HZ,
    DEVICE_KAPPA_ON,
    DEVICE_R1,
    DEVICE_R2,
    CouplerSchedule,
    PulseSpec,
    SystemParams,
    derive_coefficients,
)
from .signalsim import AcquisitionConfig

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3

DIMENSIONLESS = ("kappaT", "kappaTdrive", "kappaTau", "kappa_delay", "detuning_per_kappa", "kappaT1")
SI_FLAGS = ("kappa_hz", "T_ns", "Tdrive_ns", "tau_ns", "delay_ns", "detuning_mhz", "T1_us")
PULSE_FLAGS = ("kappaT", "kappaTdrive", "kappaTau", "kappa_delay", "detuning_per_kappa",
               "T_ns", "Tdrive_ns", "tau_ns", "delay_ns", "detuning_mhz")
DEVICE_T1_US = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def _json_default(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _emit(result: dict, out: str | None) -> None:
    text = _dump(result)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _schema() -> dict:
    return json.loads(resources.files("photoncatch").joinpath("csv_schema.json").read_text())


def _schema_help() -> str:
    lines = ["CSV columns:"]
    for name, spec in _schema()["files"].items():
        lines.append(f"  {name}: " + ", ".join(spec["columns"]))
    return "\n".join(lines)


# --- argument groups ---------------------------------------------------------

def _system_args(p, simulate: bool = False):
    g = p.add_argument_group("system")
    g.add_argument("--frequency-hz", type=float, default=DEVICE_FREQUENCY_HZ, help="resonator frequency (Hz)")
    g.add_argument("--r1", type=float, default=DEVICE_R1, help="drive-line impedance (ohm)")
    g.add_argument("--r2", type=float, default=DEVICE_R2, help="resonator impedance (ohm)")
    g.add_argument("--tau-rt", type=float, default=None, help="round-trip ratio (s); default pi/omega")
    g.add_argument("--kappa-hz", type=float, default=None, help="coupling rate kappa in 1/s (SI mode)")
    g.add_argument("--T1-us", type=float, default=None, help="intrinsic lifetime (us, SI mode)")
    g.add_argument("--kappaT1", type=float, default=None, help="kappa * T1 (dimensionless mode)")
    default = f"T1 = {DEVICE_T1_US} us" if simulate else "lossless"
    g.add_argument("--lossless", action="store_true", help=f"no intrinsic loss (default: {default})")


def _pulse_args(p):
    g = p.add_argument_group(
        "pulse",
        "Times are either dimensionless (--kappaT ...) or SI (--T-ns ...); mixing the two is an error. "
        "T is when the coupler closes, Tdrive when the drive stops, delay = T - Tdrive.",
    )
    g.add_argument("--shape", choices=("rect", "exp"), default=None)
    g.add_argument("--infinite", action="store_true", help="drive never stops (exp only)")
    g.add_argument("--kappaT", type=float, default=None)
    g.add_argument("--kappaTdrive", type=float, default=None)
    g.add_argument("--kappaTau", type=float, default=None, help="kappa * tau; tau < 0 decays")
    g.add_argument("--kappa-delay", type=float, default=None)
    g.add_argument("--detuning-per-kappa", type=float, default=None, help="drive detuning / kappa")
    g.add_argument("--T-ns", type=float, default=None)
    g.add_argument("--Tdrive-ns", type=float, default=None)
    g.add_argument("--tau-ns", type=float, default=None)
    g.add_argument("--delay-ns", type=float, default=None)
    g.add_argument("--detuning-mhz", type=float, default=None, help="drive detuning / 2 pi (MHz)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _Parser(
        prog="photoncatch",
        description="Capture efficiency of shaped pulses in a tunably coupled resonator.",
        epilog=_schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def add(name, help_):
        p = sub.add_parser(name, help=help_, epilog=_schema_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", default=None, help="JSON file of option values (flags override)")
        p.add_argument("--out", default=None, help="output file")
        subs[name] = p
        return p

    p = add("coeffs", "coupler coefficients t1, t2, r1, r2")
    _system_args(p)
    p.add_argument("--phase", type=float, default=0.0, help="phase of t1 (rad)")

    p = add("efficiency", "receiver efficiency of one pulse")
    _system_args(p)
    _pulse_args(p)
    p.add_argument("--method", choices=("analytic", "ode", "both"), default="analytic")

    p = add("scan", "efficiency on a parameter grid (CSV + JSON sidecar)")
    _system_args(p)
    p.add_argument("--recipe", choices=sorted(SCAN_RECIPES), default=None)
    p.add_argument("--family", choices=("rect", "increasing", "decreasing", "exp"), default=None)
    p.add_argument("--axis", action="append", default=None, metavar="NAME=START:STOP:NUM",
                   help=f"grid axis, repeatable; names {', '.join(dynamics.SCAN_AXES)}")
    p.add_argument("--base", action="append", default=None, metavar="NAME=VALUE", help="fixed parameter")
    p.add_argument("--relative", action="store_true", help="times in units of 1/kappa")
    p.add_argument("--method", choices=("auto", "analytic", "ode"), default="auto")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-plot-data", action="store_true", help="add a peak-normalized efficiency column")

    p = add("simulate", "synthetic capture/idle/release measurement")
    _system_args(p, simulate=True)
    _pulse_args(p)
    p.add_argument("--recipe", choices=("time-reversed", "natural", "custom"), default="time-reversed")
    p.add_argument("--idle-ns", type=float, default=30.0)
    p.add_argument("--release-ns", type=float, default=None, help="record after reopening (default 10/kappa)")
    p.add_argument("--noise-ratio", type=float, default=pipeline.REFERENCE_NOISE_RATIO,
                   help="release-window noise energy / total signal energy (0 = noiseless)")
    p.add_argument("--noise-sigma", type=float, default=None, help="single-shot noise per quadrature (V); overrides ratio")
    p.add_argument("--n-averages", type=float, default=3e6)
    p.add_argument("--q-scale", type=float, default=1.0)
    p.add_argument("--dc", type=float, nargs=2, default=(0.0, 0.0), metavar=("RE", "IM"))
    p.add_argument("--filter", choices=("brickwall", "sinc"), default="brickwall")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", default=None, help="directory for CSV records and report.json")

    p = add("estimate", "efficiencies from a processed record")
    p.add_argument("--processed", default=None, help="processed CSV (coupler used)")
    p.add_argument("--off", default=None, help="processed CSV of the coupler-off reference")
    p.add_argument("--split-ns", type=float, default=None, help="boundary between reflected and absorbed windows")
    p.add_argument("--noise-ns", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--ref-ns", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--abs-ns", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--guard-ns", type=float, default=None, help="default: from the record's config, else 20")
    p.add_argument("--raw-counts", action="store_true",
                   help="variances from recorded sample counts, ignoring filter correlation")

    p = add("validate", "Monte Carlo and cross-method suites")
    p.add_argument("--suite", action="append", choices=(*validation.SUITES, "all"), default=None)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    return parser, subs


# --- resolution --------------------------------------------------------------

def _given(args, names) -> list[str]:
    return [n for n in names if getattr(args, n, None) is not None]


def _units(args) -> str:
    dimless, si = _given(args, DIMENSIONLESS), _given(args, SI_FLAGS)
    if dimless and si:
        raise UsageError(f"cannot mix dimensionless ({', '.join(dimless)}) and SI ({', '.join(si)}) flags")
    return "dimensionless" if dimless else "si"


def resolve_system(args, default_t1_us: float | None = None) -> SystemParams:
    _units(args)
    kappa = args.kappa_hz if args.kappa_hz is not None else DEVICE_KAPPA_ON
    if args.lossless and _given(args, ("kappaT1", "T1_us")):
        raise UsageError("--lossless conflicts with an explicit T1")
    if args.kappaT1 is not None:
        kappa_i = kappa / args.kappaT1
    elif args.T1_us is not None:
        kappa_i = 1.0 / (args.T1_us * 1e-6)
    elif args.lossless or default_t1_us is None:
        kappa_i = 0.0
    else:
        kappa_i = 1.0 / (default_t1_us * 1e-6)
    try:
        return SystemParams(2 * math.pi * args.frequency_hz, args.r1, args.r2, kappa, kappa_i, args.tau_rt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def resolve_pulse(args, sys: SystemParams) -> tuple[PulseSpec | None, CouplerSchedule | None, dict]:
    """Pulse and schedule from the pulse flags; ``(None, None, info)`` for an
    infinitely long rising pulse (closed form only)."""
    k = sys.kappa_on
    if _units(args) == "dimensionless":
        conv = lambda x: None if x is None else x / k  # noqa: E731
        t_close, t_drive, tau, delay = map(conv, (args.kappaT, args.kappaTdrive, args.kappaTau, args.kappa_delay))
        dw = 0.0 if args.detuning_per_kappa is None else args.detuning_per_kappa * k
    else:
        conv = lambda x: None if x is None else x * 1e-9  # noqa: E731
        t_close, t_drive, tau, delay = map(conv, (args.T_ns, args.Tdrive_ns, args.tau_ns, args.delay_ns))
        dw = 0.0 if args.detuning_mhz is None else 2 * math.pi * args.detuning_mhz * 1e6
    if args.shape is None:
        raise UsageError("--shape is required")
    info = {"t_close": t_close, "t_drive": t_drive, "tau": tau, "detuning": dw}
    if args.shape == "exp":
        if tau is None:
            raise UsageError("exponential pulse needs --kappaTau or --tau-ns")
        if tau == 0 or not math.isfinite(tau):
            raise UsageError("tau must be finite and nonzero")
    elif tau is not None:
        raise UsageError("tau is only meaningful for --shape exp")
    if args.infinite:
        if args.shape != "exp":
            raise UsageError("--infinite needs --shape exp")
        if t_drive is not None or delay is not None:
            raise UsageError("--infinite excludes Tdrive and delay")
        if tau > 0:
            if t_close is not None:
                raise UsageError("an infinite rising pulse has no finite T")
            info["family"] = "increasing_infinite"
            return None, None, info
        if t_close is None:
            raise UsageError("--infinite decaying pulse needs T (coupler close)")
        t_drive = math.inf
    else:
        known = [x is not None for x in (t_close, t_drive, delay)]
        if sum(known) == 0:
            raise UsageError("pulse needs T or Tdrive")
        if sum(known) == 3 and not math.isclose(t_close, t_drive + delay, rel_tol=1e-12, abs_tol=1e-18):
            raise UsageError("inconsistent T, Tdrive and delay")
        if t_drive is None:
            t_drive = t_close if delay is None else t_close - delay
        if t_close is None:
            t_close = t_drive + (delay or 0.0)
    info.update(t_close=t_close, t_drive=t_drive)
    try:
        if args.shape == "rect":
            pulse = PulseSpec.rectangular(t_drive, detuning=dw)
        else:
            pulse = PulseSpec.exponential(tau, t_drive, detuning=dw)
        schedule = CouplerSchedule(t_close=t_close)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    info["family"] = args.shape
    return pulse, schedule, info


def _config(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("out", "outdir")}
    d["version"] = __version__
    return d


# --- commands ----------------------------------------------------------------

def cmd_coeffs(args) -> int:
    sys_ = resolve_system(args)
    c = derive_coefficients(sys_, args.phase)
    result = {
        "config": _config(args),
        "system": sys_.to_dict(),
        "t1": c.t1, "t2": c.t2, "r1": c.rr1, "r2": c.rr2, "r_mag": c.r_mag,
        "drive_coupling": c.drive_coupling,
        "checks": {
            "r_mag_sq_plus_kappa_tau": c.r_mag**2 + sys_.kappa_on * sys_.tau_rt,
            "t2_over_t1": abs(c.t2 / c.t1) if c.t1 else None,
        },
    }
    _emit(result, args.out)
    return EXIT_OK


def _analytic_value(sys_, pulse, schedule, info) -> dict:
    if info["family"] == "increasing_infinite":
        if sys_.kappa_i:
            res = analytic.apply_intrinsic_loss("increasing_infinite", sys_.kappa_on, 1.0 / sys_.kappa_i, tau=info["tau"])
        else:
            res = analytic.eff_increasing_infinite(sys_.kappa_on, info["tau"])
    else:
        res = analytic.efficiency(sys_.kappa_on, pulse, schedule.t_close, sys_.kappa_i)
    return {"value": res.value, "formula": res.formula.value}


def cmd_efficiency(args) -> int:
    sys_ = resolve_system(args)
    pulse, schedule, info = resolve_pulse(args, sys_)
    result = {"config": _config(args), "pulse": info}
    if args.method in ("analytic", "both"):
        try:
            result["analytic"] = _analytic_value(sys_, pulse, schedule, info)
        except NotImplementedError as exc:
            raise UsageError(f"no closed form: {exc}; use --method ode") from None
    if args.method in ("ode", "both"):
        if pulse is None:
            raise UsageError("an infinitely long rising pulse cannot be integrated; use --method analytic")
        num = validation.finite_drive(pulse, schedule.t_close)
        _, led = dynamics.simulate(sys_, num, schedule)
        result["ode"] = {"value": led.efficiency, "conservation_residual": led.conservation_residual}
    if args.method == "both":
        result["difference"] = result["ode"]["value"] - result["analytic"]["value"]
    _emit(result, args.out)
    return EXIT_OK


def _linspace(lo, hi, n):
    return [float(x) for x in np.linspace(lo, hi, n)]


TWO_PI_MHZ = 2 * math.pi * 1e6

# Times in units of 1/kappa; detuning in rad/s. Device coupling unless the axis varies it.
SCAN_RECIPES = {
    "rising-duration": {"family": "increasing", "base": {"tau": 2.0}, "axes": {"T": _linspace(0.5, 20.0, 40)}},
    "rising-tau": {"family": "increasing", "base": {"T": 20.0}, "axes": {"tau": _linspace(0.5, 8.0, 76)}},
    "rising-detuning": {"family": "increasing", "base": {"tau": 2.0, "T": 8.0},
                        "axes": {"detuning": [TWO_PI_MHZ * x for x in _linspace(-5.0, 5.0, 41)]}},
    "rising-delay": {"family": "increasing", "base": {"tau": 2.0, "T_drive": 8.0}, "axes": {"delay": _linspace(-0.3, 0.3, 61)}},
    "rect-duration": {"family": "rect", "base": {}, "axes": {"T": _linspace(0.1, 10.0, 100)}},
    "decaying-grid": {"family": "decreasing", "base": {}, "axes": {"tau": _linspace(0.2, 10.0, 50), "T": _linspace(0.2, 10.0, 50)}},
    "rising-grid": {"family": "increasing", "base": {}, "axes": {"tau": _linspace(0.2, 10.0, 50), "T": _linspace(0.2, 10.0, 50)}},
    "detuning-width": {"family": "increasing", "base": {"tau": 2.0, "T": 8.0},
                       "axes": {"kappa": [1 / 25e-9, 1 / 50e-9, 1 / 75e-9, 1 / 100e-9],
                                "detuning": [TWO_PI_MHZ * x for x in _linspace(-10.0, 10.0, 81)]}},
}


def _parse_axis(text: str):
    try:
        name, spec = text.split("=", 1)
        lo, hi, n = spec.split(":")
        return name.strip(), _linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise UsageError(f"bad --axis {text!r}; expected NAME=START:STOP:NUM") from None


def _parse_base(text: str):
    try:
        name, value = text.split("=", 1)
        return name.strip(), float(value)
    except ValueError:
        raise UsageError(f"bad --base {text!r}; expected NAME=VALUE") from None


def _scan_summary(name: str | None, res: dynamics.ScanResult) -> dict:
    eff = res.column("efficiency")
    ok = np.isfinite(eff)
    out = {"n_points": len(eff), "n_failed": int((~ok).sum())}
    if ok.any():
        i = int(np.nanargmax(eff))
        out["max_efficiency"] = float(eff[i])
        out["argmax"] = res.points[i].params
    if name == "detuning-width":
        widths = {}
        for kappa in res.axes["kappa"]:
            pts = [p for p in res.points if p.params["kappa"] == kappa]
            dw = np.array([p.params["detuning"] for p in pts])
            e = np.array([p.efficiency for p in pts])
            peak = e[np.argmin(np.abs(dw))]
            widths[repr(float(kappa))] = dynamics.half_max_width(dw, e / peak)
        out["full_width_rad_s"] = widths
        out["width_over_kappa"] = {k: w / float(k) for k, w in widths.items()}
    if name == "rising-delay":
        d = res.column("delay")
        e = res.column("efficiency")
        k = DEVICE_KAPPA_ON
        out["at_pm_3p5ns"] = {s: float(np.interp(sign * 3.5e-9 * k, d, e)) for s, sign in (("minus", -1), ("plus", 1))}
    return out


def cmd_scan(args) -> int:
    sys_ = resolve_system(args)
    if args.out is None:
        raise UsageError("scan needs --out FILE.csv")
    if args.recipe:
        if args.family or args.axis or args.base:
            raise UsageError("--recipe excludes --family/--axis/--base")
        recipe = SCAN_RECIPES[args.recipe]
        family, base, axes, relative = recipe["family"], dict(recipe["base"]), dict(recipe["axes"]), True
    else:
        if not (args.family and args.axis):
            raise UsageError("scan needs --recipe, or --family with at least one --axis")
        family, relative = args.family, args.relative
        axes = dict(_parse_axis(a) for a in args.axis)
        base = dict(_parse_base(b) for b in (args.base or []))
    try:
        res = dynamics.scan_grid(sys_, family, axes, base, method=args.method, workers=args.workers, relative=relative)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = {**_config(args), "system": sys_.to_dict(), "resolved": res.sidecar()}
    res.to_csv(args.out, config, normalized=args.emit_plot_data)
    summary = _scan_summary(args.recipe, res)
    sidecar = {**res.sidecar(), "config": config, "summary": summary, "csv": Path(args.out).name}
    Path(args.out).with_suffix(".json").write_text(_dump(sidecar) + "\n")
    print(_dump(summary))
    return EXIT_NUMERIC if summary["n_failed"] == summary["n_points"] else EXIT_OK


def _protocol(args, sys_) -> pipeline.Protocol:
    k = sys_.kappa_on
    if args.recipe == "time-reversed":
        proto = pipeline.time_reversed(k, 8.0 / k)
    elif args.recipe == "natural":
        proto = pipeline.natural(k, 2.0 / k)
    else:
        pulse, schedule, _ = resolve_pulse(args, sys_)
        if pulse is None or math.isinf(pulse.t_drive):
            raise UsageError("simulate needs a finite pulse")
        if schedule.t_close != pulse.t_drive:
            raise UsageError("simulate closes the coupler when the drive stops; T and Tdrive must agree")
        proto = pipeline.Protocol(pulse)
    if args.recipe != "custom" and (args.shape or args.infinite or _given(args, PULSE_FLAGS)):
        raise UsageError("pulse flags need --recipe custom")
    release = None if args.release_ns is None else args.release_ns * 1e-9
    return replace(proto, idle=args.idle_ns * 1e-9, release=release)


def cmd_simulate(args) -> int:
    if args.outdir is None:
        raise UsageError("simulate needs --outdir")
    sys_ = resolve_system(args, default_t1_us=DEVICE_T1_US)
    proto = _protocol(args, sys_)
    try:
        acq = AcquisitionConfig(
            n_averages=args.n_averages,
            q_scale=args.q_scale,
            dc_offset=complex(*args.dc),
            rng_seed=args.seed,
            filter_kind=args.filter,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.noise_sigma is not None:
        sigma = args.noise_sigma
    elif args.noise_ratio > 0:
        sigma = pipeline.noise_sigma_for_ratio(sys_, proto, acq, args.noise_ratio)
    else:
        sigma = 0.0
    acq = replace(acq, noise_sigma=sigma)
    m = pipeline.measure(sys_, proto, acq)

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    config = {**_config(args), "system": sys_.to_dict(), "acquisition": acq.to_dict(),
              "pulse": {"shape": proto.pulse.shape.value, "t_drive": proto.pulse.t_drive, "tau": proto.pulse.tau},
              "idle": proto.idle, "release": proto.release_time(sys_.kappa_on)}
    m.trajectory.to_csv(out / "trajectory.csv", config)
    m.raw.to_csv(out / "raw.csv", config)
    m.processed.to_csv(out / "processed.csv", {**config, "windows": m.windows})
    m.off_raw.to_csv(out / "raw_off.csv", config)
    m.off_processed.to_csv(out / "processed_off.csv", config)
    report = estimation.report_dict(m.report)
    report.update(
        config=config,
        energies={
            "noise": estimation.estimate_dict(m.noise),
            "ref": estimation.estimate_dict(m.e_ref),
            "abs": estimation.estimate_dict(m.e_abs),
            "on_total": estimation.estimate_dict(m.e_on_total),
            "off_total": estimation.estimate_dict(m.e_off_total),
        },
        dynamics={
            "receiver_efficiency": m.ledger.efficiency,
            "absorption": m.trajectory_absorption,
            "conservation_residual": m.ledger.conservation_residual,
        },
        noise_sigma=sigma,
    )
    (out / "report.json").write_text(_dump(report) + "\n")
    _emit({k: report[k] for k in ("absorption", "storage", "receiver", "dynamics")}, args.out)
    return EXIT_OK


def _window(pair, default):
    return default if pair is None else (pair[0] * 1e-9, pair[1] * 1e-9)


def _load_processed(path: str):
    rec = signalsim.ProcessedRecord.from_csv(path)
    with Path(path).open() as fh:
        cfg = json.loads(fh.readline()[len("# config: "):])
    return rec, cfg


def cmd_estimate(args) -> int:
    if args.processed is None:
        raise UsageError("estimate needs --processed FILE")
    try:
        rec, cfg = _load_processed(args.processed)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.processed}: {exc}") from None
    acq = AcquisitionConfig.from_dict(cfg["acquisition"]) if "acquisition" in cfg else None
    guard = args.guard_ns * 1e-9 if args.guard_ns is not None else (acq.guard if acq else 20e-9)
    f = 1.0 if args.raw_counts or acq is None else pipeline.sample_fraction(acq, True)
    end = rec.times[-1] + rec.dt
    noise_w = _window(args.noise_ns, (rec.times[0], -guard))
    if (args.ref_ns is None or args.abs_ns is None) and args.split_ns is None:
        raise UsageError("give --split-ns, or both --ref-ns and --abs-ns")
    split = None if args.split_ns is None else args.split_ns * 1e-9
    ref_w = _window(args.ref_ns, (-guard, split))
    abs_w = _window(args.abs_ns, (split, end))
    noise = estimation.noise_energy(rec, noise_w, f)
    e_ref = estimation.window_estimate(rec, ref_w, noise, f)
    e_abs = estimation.window_estimate(rec, abs_w, noise, f)
    eta, sigma = estimation.absorption_uncertainty(e_abs, e_ref, noise)
    report = estimation.EfficiencyReport(estimation.Measured(eta, sigma))
    if args.off:
        try:
            off, _ = _load_processed(args.off)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read {args.off}: {exc}") from None
        off_noise = estimation.noise_energy(off, (off.times[0], -guard), f)
        e_off = estimation.window_estimate(off, (-guard, off.times[-1] + off.dt), off_noise, f)
        e_on = estimation.window_estimate(rec, (-guard, end), noise, f)
        report = estimation.storage_receiver(e_on, e_off, (eta, sigma))
    windows = {"noise": list(noise_w), "ref": list(ref_w), "abs": list(abs_w)}
    report = replace(report, provenance={"windows": windows, "independent_sample_fraction": f})
    _emit({**estimation.report_dict(report), "config": _config(args)}, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    suites = args.suite or ["all"]
    verdict = validation.run_suites(suites, trials=args.trials, seed=args.seed, workers=args.workers)
    verdict["config"] = _config(args)
    _emit(verdict, args.out)
    return EXIT_OK if verdict["passed"] else EXIT_VALIDATION


COMMANDS = {
    "coeffs": cmd_coeffs,
    "efficiency": cmd_efficiency,
    "scan": cmd_scan,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "validate": cmd_validate,
}


def parse_args(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        sub = subs[args.command]
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dynamics.StepSizeError, estimation.BelowNoiseFloor, ArithmeticError, ValueError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
