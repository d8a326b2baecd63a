"""Device profiles: bundled measured cross-sections and memory geometries.

Profiles are JSON files looked up in ``$RADREL_PROFILE_DIR`` (if set) and
then in the package's own ``profiles/`` directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .readback import SBU_ONLY, MemoryGeometry, ShapeDistribution, cram_shape_distribution
from .stats import CampaignLog, CrossSectionEstimate, ErrorRateBreakdown, breakdown_from_log, estimate_cross_section
from .units import NYC_SEA_LEVEL_FLUX

BUNDLED_DIR = Path(__file__).with_name("profiles")
ENV_VAR = "RADREL_PROFILE_DIR"
POLICIES = ("frame-ecc", "parity-detect-invalidate", "secded-correct", "none")


class ProfileError(ValueError):
    pass


@dataclass
class MemoryProfile:
    geometry: MemoryGeometry
    n_events: int | None
    fluence: float | None
    sigma_bit: float
    sigma_device: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    group: str = "pl"
    native_policy: str = "none"
    shapes: str | list = "sbu"
    sefi_count: int = 0
    citation: str = ""

    @property
    def name(self) -> str:
        return self.geometry.name

    @property
    def bit_count(self) -> int:
        return self.geometry.total_bits

    @property
    def device_sigma(self) -> float:
        """Per-device cross-section: the printed value when available, else per-bit x bits."""
        return self.sigma_device if self.sigma_device is not None else self.sigma_bit * self.bit_count

    def estimate(self, per_bit: bool = True, **kw) -> CrossSectionEstimate:
        """Recompute the estimate from the stored counts."""
        if self.n_events is None or not self.fluence:
            raise ProfileError(f"{self.name}: no event count / fluence recorded")
        return estimate_cross_section(self.n_events, self.fluence, self.bit_count if per_bit else None, **kw)

    def shape_distribution(self) -> ShapeDistribution:
        if self.shapes == "cram":
            return cram_shape_distribution()
        if self.shapes == "sbu":
            return SBU_ONLY
        return ShapeDistribution.from_list(self.shapes)

    def arrival_rate(self, flux: float) -> float:
        """Upsets per hour in one device at ``flux``."""
        return self.sigma_bit * flux * self.bit_count


@dataclass
class ApplicationProfile:
    log: CampaignLog
    group: str = "app"
    printed: dict[str, list[float | None]] = field(default_factory=dict)
    citation: str = ""

    @property
    def name(self) -> str:
        return self.log.benchmark

    def breakdown(self, flux: float = NYC_SEA_LEVEL_FLUX) -> ErrorRateBreakdown:
        return breakdown_from_log(self.log, flux)


@dataclass
class DeviceProfile:
    name: str
    memories: list[MemoryProfile]
    applications: list[ApplicationProfile] = field(default_factory=list)
    aggregates: dict[str, dict[str, Any]] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    authoritative: bool = True

    def __post_init__(self):
        if not self.memories and not self.applications:
            raise ProfileError(f"profile {self.name!r} is empty")
        for m in self.memories:
            if m.sigma_bit < 0 or (m.sigma_device is not None and m.sigma_device < 0):
                raise ProfileError(f"{self.name}/{m.name}: negative cross-section")
            if m.native_policy not in POLICIES:
                raise ProfileError(f"{self.name}/{m.name}: unknown policy {m.native_policy!r}")

    def memory(self, name: str) -> MemoryProfile:
        for m in self.memories:
            if m.name == name:
                return m
        raise KeyError(name)

    def memories_in(self, group: str) -> list[MemoryProfile]:
        return [m for m in self.memories if m.group == group]

    def application(self, name: str) -> ApplicationProfile:
        for a in self.applications:
            if a.name == name:
                return a
        raise KeyError(name)

    def applications_in(self, group: str) -> list[ApplicationProfile]:
        return [a for a in self.applications if a.group == group]

    def breakdowns(self, group: str | None = None, flux: float = NYC_SEA_LEVEL_FLUX) -> dict[str, ErrorRateBreakdown]:
        return {a.name: a.breakdown(flux) for a in self.applications if group is None or a.group == group}


def _memory_from_dict(d: dict) -> MemoryProfile:
    geometry = MemoryGeometry(d["name"], d["kind"], int(d["frame_count"]), int(d["bits_per_frame"]),
                              int(d.get("block_frames", 1)))
    return MemoryProfile(
        geometry=geometry,
        n_events=None if d.get("n_events") is None else int(d["n_events"]),
        fluence=None if d.get("fluence") is None else float(d["fluence"]),
        sigma_bit=float(d["sigma_bit"]),
        sigma_device=d.get("sigma_device"),
        ci_low=d.get("ci_low"),
        ci_high=d.get("ci_high"),
        group=d.get("group", "pl"),
        native_policy=d.get("native_policy", "none"),
        shapes=d.get("shapes", "sbu"),
        sefi_count=int(d.get("sefi_count", 0)),
        citation=d.get("citation", ""),
    )


def profile_from_dict(data: dict) -> DeviceProfile:
    try:
        memories = [_memory_from_dict(m) for m in data.get("memories", [])]
        apps = [
            ApplicationProfile(
                log=CampaignLog.from_dict(a),
                group=a.get("group", "app"),
                printed=a.get("printed", {}),
                citation=a.get("citation", ""),
            )
            for a in data.get("applications", [])
        ]
        return DeviceProfile(
            name=data["name"],
            memories=memories,
            applications=apps,
            aggregates=data.get("aggregates", {}),
            metadata=data.get("metadata", {}),
            authoritative=bool(data.get("authoritative", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProfileError(f"malformed profile: {exc}") from exc


def search_path() -> list[Path]:
    paths = []
    if os.environ.get(ENV_VAR):
        paths.append(Path(os.environ[ENV_VAR]))
    paths.append(BUNDLED_DIR)
    return paths


def list_profiles() -> list[str]:
    names = set()
    for d in search_path():
        if d.is_dir():
            names.update(p.stem for p in d.glob("*.json"))
    return sorted(names)


def load_profile(name_or_path: str | Path) -> DeviceProfile:
    """Load a profile by name (searched on :func:`search_path`) or by file path."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return profile_from_dict(json.loads(p.read_text()))
    for d in search_path():
        candidate = d / f"{name_or_path}.json"
        if candidate.exists():
            return profile_from_dict(json.loads(candidate.read_text()))
    raise ProfileError(f"profile {str(name_or_path)!r} not found in {[str(d) for d in search_path()]}")
