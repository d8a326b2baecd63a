"""Upset extraction from readback campaigns.

A campaign is a golden image, a compare mask and a sequence of readbacks of
one memory. Upsets are diffed per readback, grouped into spatial events on
the frame x bit grid, classified (SBU / MBU / MCU / SEFI) and turned into a
static cross-section.
"""
from __future__ import annotations

import csv
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stats import DEFAULT_CONFIDENCE, CrossSectionEstimate, estimate_cross_section
from .units import as_fluence

MEMORY_KINDS = ("CRAM", "BRAM", "SRL", "cache-array")
DEFAULT_SEFI_THRESHOLD = 16

SBU, MBU, MCU, SEFI = "SBU", "MBU", "MCU", "SEFI"


class ContainerFormatError(ValueError):
    """Malformed readback container; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class MemoryGeometry:
    """Frame-organized memory layout.

    ``block_frames`` groups consecutive frames into the unit checked for
    SEFIs, e.g. 1024 words of one 36 Kb BRAM.
    """

    name: str
    kind: str
    frame_count: int
    bits_per_frame: int
    block_frames: int = 1

    def __post_init__(self):
        if self.kind not in MEMORY_KINDS:
            raise ValueError(f"unknown memory kind {self.kind!r}")
        if self.frame_count <= 0 or self.bits_per_frame <= 0 or self.block_frames <= 0:
            raise ValueError("frame_count, bits_per_frame and block_frames must be positive")

    @property
    def total_bits(self) -> int:
        return self.frame_count * self.bits_per_frame

    def block_of(self, frame: int) -> int:
        return frame // self.block_frames


@dataclass(frozen=True, order=True)
class UpsetBit:
    cycle: int
    frame: int
    bit: int


@dataclass(frozen=True)
class ShapeSignature:
    """Translation-free upset pattern: (frame offset, bit offset) pairs from the top-left corner."""

    offsets: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.offsets:
            raise ValueError("shape needs at least one bit")
        if min(f for f, _ in self.offsets) != 0 or min(b for _, b in self.offsets) != 0:
            raise ValueError("shape offsets must be normalized to start at (0, 0)")

    @classmethod
    def of(cls, points: Iterable[tuple[int, int]]) -> ShapeSignature:
        pts = list(points)
        f0 = min(f for f, _ in pts)
        b0 = min(b for _, b in pts)
        return cls(frozenset((f - f0, b - b0) for f, b in pts))

    @property
    def frame_extent(self) -> int:
        return max(f for f, _ in self.offsets) + 1

    @property
    def bit_extent(self) -> int:
        return max(b for _, b in self.offsets) + 1

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def max_frame_multiplicity(self) -> int:
        """Largest number of bits that share one frame."""
        return max(Counter(f for f, _ in self.offsets).values())

    def sorted_offsets(self) -> list[tuple[int, int]]:
        return sorted(self.offsets)

    def label(self) -> str:
        return f"{self.frame_extent}x{self.bit_extent}:" + ";".join(f"{f},{b}" for f, b in self.sorted_offsets())

    @classmethod
    def from_label(cls, label: str) -> ShapeSignature:
        _, pts = label.split(":", 1)
        return cls.of(tuple(int(v) for v in p.split(",")) for p in pts.split(";"))


@dataclass(frozen=True)
class UpsetEvent:
    bits: tuple[UpsetBit, ...]
    kind: str
    shape: ShapeSignature

    @property
    def cycle(self) -> int:
        return self.bits[0].cycle

    @property
    def size(self) -> int:
        return len(self.bits)

    @property
    def is_sefi(self) -> bool:
        return self.kind == SEFI


def classify(bits: Sequence[UpsetBit]) -> str:
    if len(bits) == 1:
        return SBU
    if len({b.frame for b in bits}) == 1:
        return MBU
    return MCU


def _make_event(bits: Iterable[UpsetBit], kind: str | None = None) -> UpsetEvent:
    bits = tuple(sorted(bits))
    return UpsetEvent(bits, kind or classify(bits), ShapeSignature.of((b.frame, b.bit) for b in bits))


@dataclass(frozen=True)
class ShapeDistribution:
    entries: tuple[tuple[ShapeSignature, float], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty shape distribution")
        probs = [p for _, p in self.entries]
        if any(p < 0 for p in probs):
            raise ValueError("negative shape probability")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"shape probabilities sum to {sum(probs)!r}, not 1")

    @classmethod
    def from_weights(cls, weights: Iterable[tuple[ShapeSignature, float]]) -> ShapeDistribution:
        weights = list(weights)
        total = float(sum(w for _, w in weights))
        if total <= 0:
            raise ValueError("weights must have a positive sum")
        return cls(tuple((s, w / total) for s, w in weights))

    @property
    def shapes(self) -> list[ShapeSignature]:
        return [s for s, _ in self.entries]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.entries])

    def probability(self, shape: ShapeSignature) -> float:
        return sum(p for s, p in self.entries if s == shape)

    def to_list(self) -> list[dict]:
        return [
            {"shape": s.label(), "frame_extent": s.frame_extent, "bit_extent": s.bit_extent, "probability": p}
            for s, p in self.entries
        ]

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> ShapeDistribution:
        return cls.from_weights((ShapeSignature.from_label(d["shape"]), d["probability"]) for d in items)


def _line(n: int) -> ShapeSignature:
    return ShapeSignature.of((f, 0) for f in range(n))


# CRAM upset shapes and their observed percentages. The source figures are
# drawings; the geometries below keep the stated properties (2 to 8
# consecutive frames, bit extent up to 3, at most one bit per frame).
CRAM_SHAPE_PERCENTAGES: tuple[tuple[ShapeSignature, float], ...] = (
    (_line(1), 93.80),
    (_line(2), 4.07),
    (_line(4), 0.84),
    (_line(8), 0.57),
    (ShapeSignature.of([(0, 0), (1, 1), (2, 2)]), 0.35),
    (ShapeSignature.of([(0, 0), (1, 1)]), 0.09),
)
SBU_ONLY = ShapeDistribution(((_line(1), 1.0),))


def cram_shape_distribution() -> ShapeDistribution:
    """CRAM shape percentages renormalized to sum to 1 (the raw values sum to 99.72)."""
    return ShapeDistribution.from_weights(CRAM_SHAPE_PERCENTAGES)


# ---------------------------------------------------------------------------
# readback campaigns


def pack_bits(bits: np.ndarray | Sequence[int]) -> np.ndarray:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")


def unpack_bits(packed: np.ndarray, total_bits: int) -> np.ndarray:
    return np.unpackbits(packed, count=total_bits, bitorder="little")


@dataclass
class ReadbackCampaign:
    """Golden image, mask and readbacks of one memory, all packed little-endian bitwise.

    Mask bits set to 1 are compared; 0 marks dynamic or ignored bits.
    ``config_period`` readbacks share one configuration; the device is
    reprogrammed (upsets cleared) between periods.
    """

    geometry: MemoryGeometry
    golden: np.ndarray
    mask: np.ndarray
    cycles: list[np.ndarray]
    fluence: float
    config_period: int = 50

    def __post_init__(self):
        nbytes = (self.geometry.total_bits + 7) // 8
        arrays = [self.golden, self.mask, *self.cycles]
        if any(a.dtype != np.uint8 or a.shape != (nbytes,) for a in arrays):
            raise ValueError(f"all bit arrays must be packed uint8 of {nbytes} bytes")
        if not self.cycles:
            raise ValueError("campaign needs at least one readback")
        if self.fluence <= 0:
            raise ValueError("fluence must be positive")
        if self.config_period <= 0:
            raise ValueError("config_period must be positive")

    @classmethod
    def from_bits(cls, geometry, golden, mask, cycles, fluence, config_period=50) -> ReadbackCampaign:
        """Build from unpacked 0/1 arrays of length ``geometry.total_bits``."""
        n = geometry.total_bits
        for a in (golden, mask, *cycles):
            if len(a) != n:
                raise ValueError(f"bit array length {len(a)} != total_bits {n}")
        return cls(geometry, pack_bits(golden), pack_bits(mask), [pack_bits(c) for c in cycles], fluence, config_period)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)


def diff_cycle(campaign: ReadbackCampaign, cycle_index: int) -> list[UpsetBit]:
    """Positions where ``(readback XOR golden) AND mask`` is set."""
    if not 0 <= cycle_index < campaign.n_cycles:
        raise IndexError(f"cycle {cycle_index} out of range")
    readback = campaign.cycles[cycle_index]
    if readback.shape != campaign.golden.shape or campaign.mask.shape != campaign.golden.shape:
        raise ValueError("bit array length mismatch")
    diff = (readback ^ campaign.golden) & campaign.mask
    byte_idx = np.flatnonzero(diff)
    if byte_idx.size == 0:
        return []
    bits = np.unpackbits(diff[byte_idx][:, None], axis=1, bitorder="little")
    rows, cols = np.nonzero(bits)
    positions = byte_idx[rows] * 8 + cols
    positions = positions[positions < campaign.geometry.total_bits]
    frames, offsets = np.divmod(positions, campaign.geometry.bits_per_frame)
    return [UpsetBit(cycle_index, int(f), int(b)) for f, b in zip(frames, offsets)]


def new_upsets(cycle_bits: Iterable[Iterable[UpsetBit]], config_period: int) -> list[list[UpsetBit]]:
    """Drop bits already seen earlier in the same configuration period.

    ``cycle_bits[k]`` are the raw diffs of readback ``k``; an upset persists
    in later readbacks until reconfiguration, so only its first appearance
    counts.
    """
    out = []
    seen: set[tuple[int, int]] = set()
    for k, bits in enumerate(cycle_bits):
        if k % config_period == 0:
            seen = set()
        fresh = []
        for b in bits:
            key = (b.frame, b.bit)
            if key not in seen:
                seen.add(key)
                fresh.append(b)
        out.append(fresh)
    return out


def cluster_events(bits: Iterable[UpsetBit], geometry: MemoryGeometry) -> list[UpsetEvent]:
    """Group bits into events: same readback and chained Chebyshev distance <= 1 on (frame, bit)."""
    bits = sorted(set(bits))
    for b in bits:
        if not (0 <= b.frame < geometry.frame_count and 0 <= b.bit < geometry.bits_per_frame):
            raise ValueError(f"upset {b} outside {geometry.name} geometry")
    index = {b: i for i, b in enumerate(bits)}
    parent = list(range(len(bits)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for b in bits:
        i = index[b]
        for df in (-1, 0, 1):
            for db in (-1, 0, 1):
                j = index.get(UpsetBit(b.cycle, b.frame + df, b.bit + db))
                if j is not None:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[UpsetBit]] = defaultdict(list)
    for b in bits:
        groups[find(index[b])].append(b)
    return sorted((_make_event(g) for g in groups.values()), key=lambda e: e.bits[0])


def detect_sefi(
    events: Iterable[UpsetEvent], geometry: MemoryGeometry, threshold_bits: int = DEFAULT_SEFI_THRESHOLD
) -> list[UpsetEvent]:
    """Merge events of one readback into a SEFI when a block holds more than ``threshold_bits`` upsets.

    All events touching such a block (transitively, via events spanning
    block boundaries) become one SEFI event.
    """
    events = list(events)
    by_cycle: dict[int, list[UpsetEvent]] = defaultdict(list)
    for e in events:
        by_cycle[e.cycle].append(e)

    out: list[UpsetEvent] = []
    for cycle in sorted(by_cycle):
        evs = by_cycle[cycle]
        per_block = Counter(geometry.block_of(b.frame) for e in evs for b in e.bits)
        hot = {blk for blk, n in per_block.items() if n > threshold_bits}
        if not hot:
            out.extend(evs)
            continue
        # union hot blocks that are bridged by a single event
        parent = {blk: blk for blk in hot}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        members: list[tuple[UpsetEvent, set[int]]] = []
        for e in evs:
            blocks = {geometry.block_of(b.frame) for b in e.bits} & hot
            members.append((e, blocks))
            roots = sorted({find(x) for x in blocks})
            for r in roots[1:]:
                parent[r] = roots[0]
        sefi_bits: dict[int, list[UpsetBit]] = defaultdict(list)
        for e, blocks in members:
            if blocks:
                sefi_bits[find(min(blocks))].extend(e.bits)
            else:
                out.append(e)
        out.extend(_make_event(bits, SEFI) for bits in sefi_bits.values())
    return sorted(out, key=lambda e: e.bits[0])


def shape_histogram(events: Iterable[UpsetEvent]) -> ShapeDistribution:
    """Relative frequency of each normalized shape among non-SEFI events."""
    counts = Counter(e.shape for e in events if not e.is_sefi)
    if not counts:
        raise ValueError("no events to histogram")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].size, kv[0].sorted_offsets()))
    return ShapeDistribution.from_weights(ordered)


@dataclass
class ReadbackAnalysis:
    campaign_geometry: MemoryGeometry
    fluence: float
    events: list[UpsetEvent] = field(default_factory=list)

    @property
    def sefis(self) -> list[UpsetEvent]:
        return [e for e in self.events if e.is_sefi]

    @property
    def nseu_events(self) -> list[UpsetEvent]:
        return [e for e in self.events if not e.is_sefi]

    @property
    def upset_bits(self) -> int:
        return sum(e.size for e in self.nseu_events)

    def class_counts(self) -> dict[str, int]:
        c = Counter(e.kind for e in self.events)
        return {k: c.get(k, 0) for k in (SBU, MBU, MCU, SEFI)}


def analyze_bits(
    cycle_bits: Sequence[Iterable[UpsetBit]],
    geometry: MemoryGeometry,
    fluence: float,
    config_period: int,
    threshold_bits: int = DEFAULT_SEFI_THRESHOLD,
) -> ReadbackAnalysis:
    fresh = new_upsets(cycle_bits, config_period)
    events: list[UpsetEvent] = []
    for bits in fresh:
        if bits:
            events.extend(detect_sefi(cluster_events(bits, geometry), geometry, threshold_bits))
    return ReadbackAnalysis(geometry, fluence, events)


def analyze_campaign(campaign: ReadbackCampaign, threshold_bits: int = DEFAULT_SEFI_THRESHOLD) -> ReadbackAnalysis:
    """Diff every readback, drop persisting upsets, cluster and flag SEFIs."""
    raw = [diff_cycle(campaign, k) for k in range(campaign.n_cycles)]
    return analyze_bits(raw, campaign.geometry, campaign.fluence, campaign.config_period, threshold_bits)


def static_cross_section(
    campaign: ReadbackCampaign | ReadbackAnalysis,
    per_bit: bool = False,
    threshold_bits: int = DEFAULT_SEFI_THRESHOLD,
    confidence: float = DEFAULT_CONFIDENCE,
    fluence_uncertainty: float = 0.0,
) -> CrossSectionEstimate:
    """Upset bits (SEFI bits excluded) per unit fluence, per device or per bit."""
    analysis = campaign if isinstance(campaign, ReadbackAnalysis) else analyze_campaign(campaign, threshold_bits)
    fluence = as_fluence(analysis.fluence).value
    if fluence <= 0:
        raise ValueError("fluence must be positive")
    bit_count = analysis.campaign_geometry.total_bits if per_bit else None
    return estimate_cross_section(analysis.upset_bits, fluence, bit_count, confidence, fluence_uncertainty)


# ---------------------------------------------------------------------------
# file formats

_MAGIC = b"RBKC"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIIId")


def write_container(path: str | Path, campaign: ReadbackCampaign) -> None:
    g = campaign.geometry
    header = _HEADER.pack(_MAGIC, _VERSION, g.frame_count, g.bits_per_frame, campaign.n_cycles,
                          campaign.config_period, campaign.fluence)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (campaign.golden, campaign.mask, *campaign.cycles):
            fh.write(arr.tobytes())


def read_container(path: str | Path, name: str = "memory", kind: str = "CRAM", block_frames: int = 1) -> ReadbackCampaign:
    """Parse an RBKC container; geometry name/kind/blocking are not stored in the file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ContainerFormatError(f"truncated header: {len(data)} of {_HEADER.size} bytes", len(data))
    magic, version, frames, bpf, n_cycles, period, fluence = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}", 0)
    if version != _VERSION:
        raise ContainerFormatError(f"unsupported version {version}", 4)
    if frames == 0 or bpf == 0:
        raise ContainerFormatError("zero frame_count or bits_per_frame", 6)
    if n_cycles == 0:
        raise ContainerFormatError("container holds no readbacks", 14)
    if period == 0:
        raise ContainerFormatError("config_period must be positive", 18)
    if not fluence > 0:
        raise ContainerFormatError(f"fluence must be positive, got {fluence}", 22)
    geometry = MemoryGeometry(name, kind, frames, bpf, block_frames)
    nbytes = (geometry.total_bits + 7) // 8
    expected = _HEADER.size + nbytes * (2 + n_cycles)
    if len(data) != expected:
        raise ContainerFormatError(f"payload length mismatch: expected {expected} bytes, found {len(data)}",
                                   min(len(data), expected))
    arrays = [np.frombuffer(data, np.uint8, nbytes, _HEADER.size + i * nbytes).copy() for i in range(2 + n_cycles)]
    return ReadbackCampaign(geometry, arrays[0], arrays[1], arrays[2:], fluence, period)


def write_diff_csv(path: str | Path, bits: Iterable[UpsetBit]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "frame", "bit"])
        for b in bits:
            w.writerow([b.cycle, b.frame, b.bit])


def read_diff_csv(path: str | Path) -> list[list[UpsetBit]]:
    """Read ``cycle,frame,bit`` rows, grouped into per-readback lists indexed by cycle."""
    lines = Path(path).read_text().splitlines(keepends=True)
    if not lines or [h.strip() for h in lines[0].split(",")] != ["cycle", "frame", "bit"]:
        raise ContainerFormatError("CSV header must be 'cycle,frame,bit'", 0)
    by_cycle: dict[int, list[UpsetBit]] = defaultdict(list)
    offset = len(lines[0])
    for line in lines[1:]:
        if line.strip():
            try:
                c, f, b = (int(v) for v in line.split(","))
            except ValueError as exc:
                raise ContainerFormatError(f"bad row {line.strip()!r}", offset) from exc
            if min(c, f, b) < 0:
                raise ContainerFormatError(f"negative index in row {line.strip()!r}", offset)
            by_cycle[c].append(UpsetBit(c, f, b))
        offset += len(line)
    n = max(by_cycle) + 1 if by_cycle else 0
    return [by_cycle.get(k, []) for k in range(n)]
