"""Core reliability quantities and the conversions between them.

Fluence is in n/cm^2, flux in n/cm^2/h, cross-sections in cm^2 (per device
unless stated otherwise) and FIT in failures per 1e9 device-hours.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

HOURS_PER_BILLION = 1e9
HOURS_PER_MONTH = 730.5
"""Julian month; report-level constant for hour -> month conversion."""

NYC_SEA_LEVEL_FLUX = 13.0
"""Reference >=10 MeV neutron flux at New York City sea level, n/cm^2/h."""

Kind = Literal["upset", "failure"]


def _check_non_negative(name: str, value: float) -> float:
    value = float(value)
    if not value >= 0.0:  # also rejects NaN
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    return value


@dataclass(frozen=True)
class Flux:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", _check_non_negative("flux", self.value))

    def scaled(self, factor: float) -> Flux:
        return Flux(self.value * factor)

    def over(self, hours: float) -> Fluence:
        """Fluence accumulated over ``hours`` of exposure."""
        return Fluence(self.value * _check_non_negative("hours", hours))


@dataclass(frozen=True)
class Fluence:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", _check_non_negative("fluence", self.value))

    def exposure_hours(self, flux: Flux | float) -> float:
        """Hours of exposure at ``flux`` needed to accumulate this fluence."""
        f = as_flux(flux).value
        if f == 0:
            raise ValueError("flux must be positive")
        return self.value / f


@dataclass(frozen=True)
class FitRate:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", _check_non_negative("FIT", self.value))

    def __add__(self, other: FitRate) -> FitRate:
        if not isinstance(other, FitRate):
            return NotImplemented
        return FitRate(self.value + other.value)

    def __radd__(self, other):
        # lets sum() start from 0
        if other == 0:
            return self
        return NotImplemented

    def __mul__(self, k: float) -> FitRate:
        return FitRate(self.value * k)

    __rmul__ = __mul__

    @property
    def per_hour(self) -> float:
        return self.value / HOURS_PER_BILLION


@dataclass(frozen=True)
class MeanTimeTo:
    hours: float
    kind: Kind = "failure"

    def __post_init__(self):
        if not self.hours > 0:
            raise ValueError(f"mean time must be positive, got {self.hours!r}")

    @property
    def months(self) -> float:
        return self.hours / HOURS_PER_MONTH

    @property
    def observed(self) -> bool:
        return True

    @property
    def label(self) -> str:
        return "MTTU" if self.kind == "upset" else "MTTF"


@dataclass(frozen=True)
class NoFailuresObserved:
    """Stand-in for the mean time when the rate is zero.

    Carries no hours or months; reports print it as ``-``.
    """

    kind: Kind = "failure"

    @property
    def observed(self) -> bool:
        return False

    @property
    def label(self) -> str:
        return "MTTU" if self.kind == "upset" else "MTTF"

    def __str__(self) -> str:
        return "-"


MeanTime = Union[MeanTimeTo, NoFailuresObserved]


def as_flux(flux: Flux | float) -> Flux:
    return flux if isinstance(flux, Flux) else Flux(flux)


def as_fluence(fluence: Fluence | float) -> Fluence:
    return fluence if isinstance(fluence, Fluence) else Fluence(fluence)


def as_fit(fit: FitRate | float) -> FitRate:
    return fit if isinstance(fit, FitRate) else FitRate(fit)


def fit_from_cross_section(sigma_device: float, flux: Flux | float) -> FitRate:
    """FIT = sigma * flux * 1e9."""
    sigma = _check_non_negative("cross-section", sigma_device)
    return FitRate(sigma * as_flux(flux).value * HOURS_PER_BILLION)


def mttf_from_fit(fit: FitRate | float, kind: Kind = "failure") -> MeanTime:
    """Mean time (hours) = 1e9 / FIT; a zero rate gives :class:`NoFailuresObserved`."""
    fit = as_fit(fit)
    if fit.value == 0:
        return NoFailuresObserved(kind)
    return MeanTimeTo(HOURS_PER_BILLION / fit.value, kind)


def months(hours: float) -> float:
    return hours / HOURS_PER_MONTH
