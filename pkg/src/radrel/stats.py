"""Cross-section estimation with exact Poisson (Garwood) confidence intervals.

Static cross-sections come from upset counts, dynamic ones from application
error counts in a campaign log. Both share :class:`CrossSectionEstimate`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from scipy.special import gammaincinv

from .units import FitRate, Fluence, Flux, as_fluence, as_flux, fit_from_cross_section

DEFAULT_CONFIDENCE = 0.95

CATEGORIES = (
    "correct",
    "tolerable_sdc",
    "critical_sdc",
    "crash_recoverable",
    "crash_soft_persistent",
    "timeout",
)
ERROR_CATEGORIES = CATEGORIES[1:]
SDC_CATEGORIES = ("tolerable_sdc", "critical_sdc")
# timeouts count as hangs: the board is reset on a result-query timeout
HANG_CATEGORIES = ("crash_recoverable", "crash_soft_persistent", "timeout")


class LogValidationError(ValueError):
    """Well-formed log whose numbers are inconsistent (e.g. counts exceeding runs)."""


class LogFormatError(ValueError):
    pass


def garwood_interval(n_events: int, confidence: float = DEFAULT_CONFIDENCE) -> tuple[float, float]:
    """Exact two-sided Poisson interval for an observed count.

    ``low = chi2.ppf(a/2, 2n)/2`` and ``high = chi2.ppf(1-a/2, 2n+2)/2`` with
    ``a = 1 - confidence``, written via the inverse regularized incomplete
    gamma function (``chi2.ppf(p, 2k)/2 == gammaincinv(k, p)``).
    """
    if n_events < 0 or int(n_events) != n_events:
        raise ValueError(f"n_events must be a non-negative integer, got {n_events!r}")
    if not 0.0 <= confidence < 1.0:
        raise ValueError(f"confidence must be in [0, 1), got {confidence!r}")
    n = int(n_events)
    alpha = 1.0 - confidence
    low = 0.0 if n == 0 else float(gammaincinv(n, alpha / 2))
    high = float(gammaincinv(n + 1, 1.0 - alpha / 2))
    return low, high


@dataclass(frozen=True)
class CrossSectionEstimate:
    """Mean and confidence bounds of a cross-section.

    ``bit_count`` is None for the per-device basis. With zero events the mean
    is 0, ``ci_low`` is None and only the upper bound is meaningful.
    """

    n_events: int
    fluence: float
    mean: float
    ci_low: float | None
    ci_high: float
    confidence: float = DEFAULT_CONFIDENCE
    bit_count: int | None = None

    @property
    def basis(self) -> str:
        return "per-device" if self.bit_count is None else "per-bit"

    @property
    def observed(self) -> bool:
        return self.n_events > 0

    @property
    def per_device(self) -> float:
        """Mean scaled back to a whole-device cross-section."""
        return self.mean * (self.bit_count or 1)

    def format_mean(self, fmt: str = "{:.2E}") -> str:
        return fmt.format(self.mean) if self.observed else "-"

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "fluence": self.fluence,
            "mean": self.mean if self.observed else None,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "basis": self.basis,
            "bit_count": self.bit_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CrossSectionEstimate:
        return cls(
            n_events=int(d["n_events"]),
            fluence=float(d["fluence"]),
            mean=0.0 if d["mean"] is None else float(d["mean"]),
            ci_low=None if d["ci_low"] is None else float(d["ci_low"]),
            ci_high=float(d["ci_high"]),
            confidence=float(d.get("confidence", DEFAULT_CONFIDENCE)),
            bit_count=d.get("bit_count"),
        )


def estimate_cross_section(
    n_events: int,
    fluence: Fluence | float,
    bit_count: int | None = None,
    confidence: float = DEFAULT_CONFIDENCE,
    fluence_uncertainty: float = 0.0,
) -> CrossSectionEstimate:
    """Cross-section ``n / fluence`` (per bit when ``bit_count`` is given).

    ``fluence_uncertainty`` (e.g. 0.1) optionally widens the bounds to
    ``low / (1 + u)`` and ``high / (1 - u)``.
    """
    phi = as_fluence(fluence).value
    if phi <= 0:
        raise ValueError("fluence must be positive")
    if bit_count is not None and bit_count <= 0:
        raise ValueError("bit_count must be positive")
    if not 0.0 <= fluence_uncertainty < 1.0:
        raise ValueError("fluence_uncertainty must be in [0, 1)")
    denom = phi * (bit_count or 1)
    low, high = garwood_interval(n_events, confidence)
    ci_low = None if n_events == 0 else low / denom / (1.0 + fluence_uncertainty)
    ci_high = high / denom / (1.0 - fluence_uncertainty)
    return CrossSectionEstimate(
        n_events=int(n_events),
        fluence=phi,
        mean=n_events / denom,
        ci_low=ci_low,
        ci_high=ci_high,
        confidence=confidence,
        bit_count=bit_count,
    )


@dataclass(frozen=True)
class RunOutcome:
    benchmark: str
    result: str
    duration: float = 0.0

    def __post_init__(self):
        if self.result not in CATEGORIES:
            raise ValueError(f"unknown run result {self.result!r}")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass
class CampaignLog:
    """Per-category run counts of one benchmark under beam.

    ``counts`` holds the error categories; ``correct`` runs are whatever is
    left of ``runs``.
    """

    benchmark: str
    fluence: float
    runs: int
    counts: dict[str, int] = field(default_factory=dict)
    flux_during_test: float | None = None

    def __post_init__(self):
        if self.fluence <= 0:
            raise LogValidationError(f"{self.benchmark}: fluence must be positive")
        unknown = set(self.counts) - set(CATEGORIES)
        if unknown:
            raise LogFormatError(f"{self.benchmark}: unknown categories {sorted(unknown)}")
        if any(v < 0 for v in self.counts.values()):
            raise LogValidationError(f"{self.benchmark}: negative count")
        self.counts = {c: int(self.counts.get(c, 0)) for c in ERROR_CATEGORIES}
        correct = self.runs - sum(self.counts.values())
        if correct < 0:
            raise LogValidationError(
                f"{self.benchmark}: error counts ({sum(self.counts.values())}) exceed total runs ({self.runs})"
            )

    @property
    def correct(self) -> int:
        return self.runs - sum(self.counts.values())

    def count(self, *categories: str) -> int:
        return sum(self.counts[c] for c in categories)

    @classmethod
    def from_runs(cls, runs: Iterable[RunOutcome], fluence: float, benchmark: str | None = None) -> CampaignLog:
        runs = list(runs)
        if benchmark is None:
            names = {r.benchmark for r in runs}
            if len(names) != 1:
                raise LogFormatError("runs must come from one benchmark")
            benchmark = names.pop()
        counts = {c: 0 for c in ERROR_CATEGORIES}
        for r in runs:
            if r.result != "correct":
                counts[r.result] += 1
        return cls(benchmark, fluence, len(runs), counts)

    def to_dict(self) -> dict:
        d = {
            "benchmark": self.benchmark,
            "fluence_n_per_cm2": self.fluence,
            "counts": {"runs": self.runs, "correct": self.correct, **self.counts},
        }
        if self.flux_during_test is not None:
            d["flux_during_test"] = self.flux_during_test
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> CampaignLog:
        try:
            counts = dict(d["counts"])
            runs = int(counts.pop("runs"))
            correct = counts.pop("correct", None)
            benchmark = str(d["benchmark"])
            fluence = float(d["fluence_n_per_cm2"])
            counts = {k: int(v) for k, v in counts.items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(f"malformed campaign log entry: {exc}") from exc
        log = cls(benchmark, fluence, runs, counts, d.get("flux_during_test"))
        if correct is not None and int(correct) != log.correct:
            raise LogValidationError(
                f"{log.benchmark}: category counts do not sum to total runs "
                f"(correct={correct}, expected {log.correct})"
            )
        return log


def load_campaign_logs(path: str | Path) -> list[CampaignLog]:
    """Read campaign logs from JSON (object or list) or ``benchmark,category,count`` CSV.

    CSV rows with category ``runs`` and ``fluence_n_per_cm2`` carry the run
    total and fluence of each benchmark.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return parse_campaign_csv(text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"{path}: invalid JSON at char {exc.pos}: {exc.msg}") from exc
    if isinstance(data, dict):
        data = [data]
    return [CampaignLog.from_dict(d) for d in data]


def parse_campaign_csv(text: str) -> list[CampaignLog]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["benchmark", "category", "count"]:
        raise LogFormatError("CSV header must be 'benchmark,category,count'")
    grouped: dict[str, dict[str, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            grouped.setdefault(row["benchmark"].strip(), {})[row["category"].strip()] = float(row["count"])
        except (ValueError, AttributeError) as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from exc
    logs = []
    for bench, rows in grouped.items():
        if "runs" not in rows or "fluence_n_per_cm2" not in rows:
            raise LogFormatError(f"{bench}: CSV needs 'runs' and 'fluence_n_per_cm2' rows")
        fluence = rows.pop("fluence_n_per_cm2")
        d = {"benchmark": bench, "fluence_n_per_cm2": fluence, "counts": {k: int(v) for k, v in rows.items()}}
        logs.append(CampaignLog.from_dict(d))
    return logs


def dynamic_cross_sections(
    log: CampaignLog,
    confidence: float = DEFAULT_CONFIDENCE,
    fluence_uncertainty: float = 0.0,
) -> dict[str, CrossSectionEstimate]:
    """Per-device cross-section for every error category and the sdc / crash / all aggregates."""
    groups = {c: (c,) for c in ERROR_CATEGORIES}
    groups["sdc"] = SDC_CATEGORIES
    groups["crash"] = HANG_CATEGORIES
    groups["all"] = ERROR_CATEGORIES
    return {
        name: estimate_cross_section(log.count(*cats), log.fluence, None, confidence, fluence_uncertainty)
        for name, cats in groups.items()
    }


@dataclass(frozen=True)
class ErrorRateBreakdown:
    fit_critical: FitRate
    fit_tolerable: FitRate
    fit_hang: FitRate

    @property
    def fit_all(self) -> FitRate:
        return self.fit_critical + self.fit_tolerable + self.fit_hang

    @property
    def fit_c_plus_h(self) -> FitRate:
        return self.fit_critical + self.fit_hang

    def scaled(self, k: float) -> ErrorRateBreakdown:
        return ErrorRateBreakdown(self.fit_critical * k, self.fit_tolerable * k, self.fit_hang * k)

    def to_dict(self) -> dict:
        return {
            "fit_critical": self.fit_critical.value,
            "fit_tolerable": self.fit_tolerable.value,
            "fit_hang": self.fit_hang.value,
            "fit_all": self.fit_all.value,
            "fit_c_plus_h": self.fit_c_plus_h.value,
        }


ZERO_BREAKDOWN = ErrorRateBreakdown(FitRate(0.0), FitRate(0.0), FitRate(0.0))


def breakdown_from_log(log: CampaignLog | None, flux: Flux | float) -> ErrorRateBreakdown:
    """Convert a log's critical / tolerable / hang cross-sections to FIT at ``flux``."""
    flux = as_flux(flux)
    if flux.value <= 0:
        raise ValueError("flux must be positive")
    if log is None:
        return ZERO_BREAKDOWN
    sigma = lambda *cats: log.count(*cats) / log.fluence  # noqa: E731
    return ErrorRateBreakdown(
        fit_critical=fit_from_cross_section(sigma("critical_sdc"), flux),
        fit_tolerable=fit_from_cross_section(sigma("tolerable_sdc"), flux),
        fit_hang=fit_from_cross_section(sigma(*HANG_CATEGORIES), flux),
    )
