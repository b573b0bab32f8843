"""Closed-form receiver efficiencies ``E_res / E_tot``.

Every formula depends only on the products kappa*T, kappa*T', kappa*tau, so
inputs are normalised to the kappa = 1 frame on entry. The removable
singularity at kappa*tau = -2 (the decaying pulse matched to the resonator's
own decay) is handled by ``_expm1_ratio`` and, inside a small window, by the
explicit limit ``kappa^2 T^2 exp(-kappa T)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .coremodel import PulseSpec, Shape

SINGULAR_WINDOW = 1e-7
INV_PHI = (math.sqrt(5) - 1) / 2


class Formula(str, Enum):
    RECTANGULAR = "rectangular"
    EXPONENTIAL = "exponential"
    EXPONENTIAL_DEGENERATE = "exponential_degenerate"
    DECREASING_INFINITE = "decreasing_infinite"
    INCREASING_INFINITE = "increasing_infinite"
    DELAYED = "delayed"
    LOSSY = "lossy"


@dataclass(frozen=True)
class EfficiencyResult:
    value: float
    formula: Formula

    def __float__(self):
        return self.value


def _expm1_ratio(a: float, x: float) -> float:
    """``expm1(a x) / a``, continuous through ``a = 0`` (value ``x``)."""
    if a == 0.0:
        return x
    return math.expm1(a * x) / a


def _captured_amplitude(x_tau: float, x_close: float) -> float:
    """``(e^{T/tau} - e^{-T/2}) / (1 + 2/tau)`` in the kappa = 1 frame.

    This is the (scaled) resonator amplitude when the coupler closes; written
    as ``(1/2) e^{-T/2} expm1(aT)/a`` with ``a = 1/tau + 1/2`` so that the
    matched-decay point ``tau = -2`` is not a 0/0.
    """
    a = (x_tau + 2.0) / (2.0 * x_tau)
    return 0.5 * math.exp(-x_close / 2) * _expm1_ratio(a, x_close)


def eff_rectangular(kappa: float, t_pulse: float) -> EfficiencyResult:
    """Rectangular drive with the coupler closing when the drive stops."""
    if not (kappa > 0 and t_pulse > 0):
        raise ValueError("kappa and t_pulse must be > 0")
    x = kappa * t_pulse
    return EfficiencyResult(4.0 / x * math.expm1(-x / 2) ** 2, Formula.RECTANGULAR)


def _exponential_scaled(x_tau: float, x_close: float, x_drive: float) -> float:
    if abs(x_tau + 2.0) <= 2.0 * SINGULAR_WINDOW:
        # Matched decay: 2 R1 E_res = A0^2 T^2 kappa e^{-kappa T}, E_tot from tau = -2.
        e_res = x_close**2 * math.exp(-x_close)
        e_tot = (x_tau / 2.0) * math.expm1(2.0 * x_drive / x_tau)
        return e_res / e_tot
    if x_tau > 0:
        # Divide numerator and denominator by e^{2T'/tau} to stay finite for long rising pulses.
        a = (x_tau + 2.0) / (2.0 * x_tau)
        amp = 0.5 * (math.exp((x_close - x_drive) / x_tau) - math.exp(-x_close / 2 - x_drive / x_tau)) / a
        return 8.0 / x_tau * amp**2 / -math.expm1(-2.0 * x_drive / x_tau)
    amp = _captured_amplitude(x_tau, x_close)
    denom = -math.expm1(2.0 * x_drive / x_tau) if math.isfinite(x_drive) else 1.0
    return -8.0 / x_tau * amp**2 / denom


def eff_exponential(kappa: float, tau: float, t_close: float, t_drive: float | None = None) -> EfficiencyResult:
    """Exponential drive ``A0 exp(t/tau)`` on ``[0, T']``, coupler closed at ``T <= T'``.

    For a drive that stops before the coupler closes compose with
    :func:`delay_factor` (or use :func:`efficiency`).
    """
    t_drive = t_close if t_drive is None else t_drive
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    if tau == 0 or math.isnan(tau):
        raise ValueError("tau must be nonzero")
    if not (t_close > 0 and t_drive > 0):
        raise ValueError("T and T' must be > 0")
    if t_close > t_drive * (1 + 1e-15):
        raise ValueError("t_close > t_drive: the drive stops first, apply delay_factor")
    x_tau, x_close, x_drive = kappa * tau, kappa * t_close, kappa * t_drive
    if math.isinf(x_drive) and x_tau > 0:
        raise ValueError("an infinitely long rising drive carries infinite energy")
    formula = Formula.EXPONENTIAL_DEGENERATE if abs(x_tau + 2.0) <= 2.0 * SINGULAR_WINDOW else Formula.EXPONENTIAL
    return EfficiencyResult(_exponential_scaled(x_tau, x_close, x_drive), formula)


def eff_decreasing_infinite(kappa: float, tau_abs: float, t_close: float) -> EfficiencyResult:
    """Decaying drive ``exp(-t/tau_abs)`` that never stops; coupler closes at ``T``."""
    if not tau_abs > 0:
        raise ValueError("tau_abs must be > 0")
    if not (kappa > 0 and t_close >= 0):
        raise ValueError("kappa must be > 0 and t_close >= 0")
    if t_close == 0:
        return EfficiencyResult(0.0, Formula.DECREASING_INFINITE)
    return EfficiencyResult(
        _exponential_scaled(-kappa * tau_abs, kappa * t_close, math.inf), Formula.DECREASING_INFINITE
    )


def eff_increasing_infinite(kappa: float, tau: float) -> EfficiencyResult:
    """Rising drive, ``T = T' -> infinity``: ``4 (kt/2) / (1 + kt/2)^2``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    h = kappa * tau / 2.0
    return EfficiencyResult(4.0 * h / (1.0 + h) ** 2, Formula.INCREASING_INFINITE)


def delay_factor(kappa: float, pulse: PulseSpec | None, t_close: float, t_drive: float) -> float:
    """Multiplier on the ``T = T'`` efficiency when coupler close and drive stop differ.

    Drive stops first (``T' < T``): the captured field leaks for ``T - T'``,
    giving ``exp(-kappa (T - T'))`` for any pulse. Coupler closes first: only
    the exponential pulse has a closed form.
    """
    if t_close == t_drive:
        return 1.0
    if t_drive < t_close:
        return math.exp(-kappa * (t_close - t_drive))
    if pulse is None or pulse.shape is not Shape.EXPONENTIAL:
        raise ValueError("coupler-first delay factor is only known for exponential pulses")
    x_tau = kappa * pulse.tau
    num = _captured_amplitude(x_tau, kappa * t_close)
    den = _captured_amplitude(x_tau, kappa * t_drive)
    return (num / den) ** 2


_LOSS_FORMULAS = {
    Formula.RECTANGULAR: (eff_rectangular, ("t_pulse",)),
    Formula.EXPONENTIAL: (eff_exponential, ("tau", "t_close", "t_drive")),
    Formula.DECREASING_INFINITE: (eff_decreasing_infinite, ("tau_abs", "t_close")),
    Formula.INCREASING_INFINITE: (eff_increasing_infinite, ("tau",)),
}


def apply_intrinsic_loss(formula: Formula | str, kappa: float, t1_time: float, **params) -> EfficiencyResult:
    """Lossless ``formula`` with every time stretched by ``(kappa + 1/T1)/kappa``,
    then scaled by ``kappa / (kappa + 1/T1)``.

    Valid for envelopes that are functions of ``t/tau`` (rectangular and
    exponential); ``params`` are the keyword arguments of the base formula.
    """
    try:
        formula = Formula(formula)
        func, time_keys = _LOSS_FORMULAS[formula]
    except (ValueError, KeyError):
        raise ValueError(f"intrinsic-loss rule does not apply to formula {formula!r}") from None
    if not t1_time > 0:
        raise ValueError("t1_time must be > 0")
    kappa_i = 0.0 if math.isinf(t1_time) else 1.0 / t1_time
    stretch = (kappa + kappa_i) / kappa
    scaled = {k: (v * stretch if k in time_keys and v is not None else v) for k, v in params.items()}
    base = func(kappa, **scaled)
    return EfficiencyResult(base.value / stretch, Formula.LOSSY)


def loss_prefactor(kappa: float, kappa_i: float) -> float:
    """Fraction ``kappa / (kappa + kappa_i)`` of captured energy not lost during the drive."""
    return kappa / (kappa + kappa_i)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 500):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def optimal_rectangular(kappa: float, tol: float = 1e-8) -> tuple[float, float]:
    """Pulse length maximising the rectangular efficiency, and that efficiency."""
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    x, value = golden_section_max(lambda x: eff_rectangular(1.0, x).value, 0.5, 6.0, tol)
    return x / kappa, value


def efficiency(kappa: float, pulse: PulseSpec, t_close: float | None = None, kappa_i: float = 0.0) -> EfficiencyResult:
    """Closed-form efficiency for an on-resonance pulse and instantaneous coupler.

    Raises ``NotImplementedError`` when no closed form exists (detuned drive,
    rectangular pulse cut by the coupler before the drive stops).
    """
    if pulse.detuning != 0:
        raise NotImplementedError("no closed form for a detuned drive")
    t_close = pulse.t_drive if t_close is None else t_close
    t_drive = pulse.t_drive
    kappa_eff = kappa + kappa_i
    if pulse.shape is Shape.RECTANGULAR:
        if t_close < t_drive:
            raise NotImplementedError("rectangular pulse with the coupler closing first")
        value = eff_rectangular(kappa_eff, t_drive).value * delay_factor(kappa_eff, pulse, t_close, t_drive)
        formula = Formula.RECTANGULAR
    elif math.isinf(t_drive):
        if pulse.tau >= 0:
            raise ValueError("an infinite drive must decay")
        value = eff_decreasing_infinite(kappa_eff, -pulse.tau, t_close).value
        formula = Formula.DECREASING_INFINITE
    elif t_close <= t_drive:
        res = eff_exponential(kappa_eff, pulse.tau, t_close, t_drive)
        value, formula = res.value, res.formula
    else:
        value = eff_exponential(kappa_eff, pulse.tau, t_drive, t_drive).value
        value *= delay_factor(kappa_eff, pulse, t_close, t_drive)
        formula = Formula.DELAYED
    if t_close != t_drive and formula is not Formula.DECREASING_INFINITE:
        formula = Formula.DELAYED
    if kappa_i:
        return EfficiencyResult(value * loss_prefactor(kappa, kappa_i), Formula.LOSSY)
    return EfficiencyResult(value, formula)
