"""Projection of measured cross-sections to field environments and fleet sizes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from statistics import mean
from typing import Iterable, Mapping

from .stats import ErrorRateBreakdown
from .units import (
    NYC_SEA_LEVEL_FLUX,
    FitRate,
    Flux,
    MeanTime,
    MeanTimeTo,
    NoFailuresObserved,
    fit_from_cross_section,
    mttf_from_fit,
)


@dataclass(frozen=True)
class Environment:
    """Neutron environment, given either as an absolute flux or as a multiple of NYC sea level."""

    name: str
    flux: float | None = None
    reference_multiplier: float | None = None

    def __post_init__(self):
        if (self.flux is None) == (self.reference_multiplier is None):
            raise ValueError("give exactly one of flux or reference_multiplier")
        if self.resolved_flux.value <= 0:
            raise ValueError("environment flux must be positive")

    @property
    def resolved_flux(self) -> Flux:
        if self.flux is not None:
            return Flux(self.flux)
        return Flux(NYC_SEA_LEVEL_FLUX * self.reference_multiplier)

    @property
    def multiplier(self) -> float:
        return self.resolved_flux.value / NYC_SEA_LEVEL_FLUX


NYC_SEA_LEVEL = Environment("nyc_sea_level", reference_multiplier=1.0)
# avionics altitude, flat 500x the sea-level flux
NYC_40KFT = Environment("nyc_40kft", reference_multiplier=500.0)
ENVIRONMENTS = {e.name: e for e in (NYC_SEA_LEVEL, NYC_40KFT)}


def get_environment(name: str) -> Environment:
    try:
        return ENVIRONMENTS[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {', '.join(ENVIRONMENTS)}") from None


@dataclass(frozen=True)
class Deployment:
    n_devices: int = 1

    def __post_init__(self):
        if int(self.n_devices) != self.n_devices or self.n_devices < 1:
            raise ValueError("n_devices must be a positive integer")


# (environment, devices) pairs used throughout the reports
PRESETS: dict[str, tuple[Environment, Deployment]] = {
    "1 node, sea level": (NYC_SEA_LEVEL, Deployment(1)),
    "1 node, 40k ft": (NYC_40KFT, Deployment(1)),
    "1000 nodes, sea level": (NYC_SEA_LEVEL, Deployment(1000)),
}


@dataclass(frozen=True)
class ProjectionRow:
    subject: str
    environment: Environment
    deployment: Deployment
    fit: FitRate
    mean_time: MeanTime
    variant: str | None = None

    @property
    def months(self) -> float | None:
        return self.mean_time.months if self.mean_time.observed else None

    @property
    def hours(self) -> float | None:
        return self.mean_time.hours if self.mean_time.observed else None

    @property
    def key(self) -> str:
        return self.subject if self.variant is None else f"{self.subject}/{self.variant}"

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "variant": self.variant,
            "environment": self.environment.name,
            "flux": self.environment.resolved_flux.value,
            "n_devices": self.deployment.n_devices,
            "fit": self.fit.value,
            "metric": self.mean_time.label,
            "hours": self.hours,
            "months": self.months,
        }


def _row(subject, env, dep, fit: FitRate, kind, variant=None) -> ProjectionRow:
    return ProjectionRow(subject, env, dep, fit, mttf_from_fit(fit, kind), variant)


def project(
    sigma_device: float,
    env: Environment,
    dep: Deployment = Deployment(),
    subject: str = "device",
    kind: str = "upset",
) -> ProjectionRow:
    """FIT and mean time of ``n_devices`` devices of cross-section ``sigma_device`` in ``env``."""
    fit = fit_from_cross_section(sigma_device, env.resolved_flux) * dep.n_devices
    return _row(subject, env, dep, fit, kind)


def scale_mean_time(base: MeanTime, env: Environment, dep: Deployment) -> MeanTime:
    """Carry a sea-level single-device mean time to another environment and fleet size."""
    if not base.observed:
        return base
    return MeanTimeTo(base.hours / (env.multiplier * dep.n_devices), base.kind)


def mttf_table(
    breakdowns: Mapping[str, ErrorRateBreakdown],
    env: Environment,
    dep: Deployment = Deployment(),
) -> list[ProjectionRow]:
    """Two rows per application: ``All`` (critical + tolerable + hang) and ``C+H``.

    ``breakdowns`` must be expressed at the NYC sea-level reference flux.
    """
    k = env.multiplier * dep.n_devices
    rows = []
    for app, b in breakdowns.items():
        rows.append(_row(app, env, dep, b.fit_all * k, "failure", "All"))
        rows.append(_row(app, env, dep, b.fit_c_plus_h * k, "failure", "C+H"))
    return rows


@dataclass(frozen=True)
class RatioEntry:
    numerator: str
    denominator: str
    ratio: float

    @property
    def degradation(self) -> float:
        """Fractional shortfall of the numerator's mean time against the denominator's."""
        return 1.0 - self.ratio


class RatioReport:
    """Pairwise mean-time ratios between rows of one environment and deployment."""

    def __init__(self, rows: Iterable[ProjectionRow]):
        rows = list(rows)
        settings = {(r.environment.resolved_flux.value, r.deployment.n_devices) for r in rows}
        if len(settings) > 1:
            raise ValueError("rows must share environment and deployment")
        self.rows = {r.key: r for r in rows}
        self.excluded = sorted(k for k, r in self.rows.items() if isinstance(r.mean_time, NoFailuresObserved))
        usable = [k for k in self.rows if k not in self.excluded]
        self.entries = [
            RatioEntry(a, b, self.rows[a].mean_time.hours / self.rows[b].mean_time.hours)
            for a, b in itertools.permutations(usable, 2)
        ]
        self._index = {(e.numerator, e.denominator): e for e in self.entries}

    def ratio(self, numerator: str, denominator: str) -> float:
        return self._index[(numerator, denominator)].ratio

    def degradation(self, numerator: str, denominator: str) -> float:
        return self._index[(numerator, denominator)].degradation

    def mean_ratio(self, numerators: Iterable[str], denominator: str) -> float:
        return mean(self.ratio(n, denominator) for n in numerators)

    def to_list(self) -> list[dict]:
        return [{"numerator": e.numerator, "denominator": e.denominator, "ratio": e.ratio,
                 "degradation": e.degradation} for e in self.entries]


def ratio_report(rows: Iterable[ProjectionRow]) -> RatioReport:
    return RatioReport(rows)
