"""Shaped-pulse capture by a resonator behind a tunable coupler."""
from .coremodel import (
    CouplerCoefficients,
    CouplerSchedule,
    PulseSpec,
    Shape,
    SystemParams,
    derive_coefficients,
    envelope_at,
)

__version__ = "0.1.0"

__all__ = [
    "CouplerCoefficients",
    "CouplerSchedule",
    "PulseSpec",
    "Shape",
    "SystemParams",
    "derive_coefficients",
    "envelope_at",
]
