"""Monte Carlo soft-error simulation.

Upsets arrive per memory array as homogeneous Poisson processes with rate
``sigma_bit * flux * bits * n_devices``. Each arrival draws an upset shape and
is either absorbed by the array's mitigation or becomes a failure. The
scrub race models the scrubber as a FIFO server working through the
backlog of uncorrected upsets.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .profiles import POLICIES, DeviceProfile, MemoryProfile
from .projection import Deployment, Environment
from .readback import MemoryGeometry, ShapeDistribution, ShapeSignature, UpsetBit
from .units import MeanTime, MeanTimeTo, NoFailuresObserved

OK, FAIL, FAIL_IF_DIRTY = 0, 1, 2


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, derived from the master seed and trial index."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


@dataclass
class MitigationConfig:
    """Mitigation switches.

    ``cache_policy`` maps array names to one of ``POLICIES``; CRAM arrays
    follow ``frame_ecc`` instead. ``scrub_rate`` is in corrections per minute.
    """

    scrub_rate: float = 0.0
    frame_ecc: bool = False
    interleaving: bool = False
    cache_policy: dict[str, str] = field(default_factory=dict)
    dirty_line_fraction: float = 0.5

    def __post_init__(self):
        if self.scrub_rate < 0:
            raise ValueError("scrub_rate must be non-negative")
        if not 0.0 <= self.dirty_line_fraction <= 1.0:
            raise ValueError("dirty_line_fraction must be in [0, 1]")
        bad = {p for p in self.cache_policy.values() if p not in POLICIES}
        if bad:
            raise ValueError(f"unknown cache policies {sorted(bad)}")

    @classmethod
    def off(cls) -> MitigationConfig:
        return cls()

    @classmethod
    def native(cls, profile: DeviceProfile, **overrides) -> MitigationConfig:
        """The protection the device ships with, as recorded in the profile."""
        policies = {m.name: m.native_policy for m in profile.memories if m.geometry.kind != "CRAM"}
        kw = dict(frame_ecc=True, interleaving=True, cache_policy=policies)
        kw.update(overrides)
        return cls(**kw)

    def policy_for(self, memory: MemoryProfile) -> str:
        if memory.geometry.kind == "CRAM":
            return "frame-ecc" if self.frame_ecc else "none"
        return self.cache_policy.get(memory.name, "none")

    def to_dict(self) -> dict:
        return {
            "scrub_rate": self.scrub_rate,
            "frame_ecc": self.frame_ecc,
            "interleaving": self.interleaving,
            "cache_policy": dict(self.cache_policy),
            "dirty_line_fraction": self.dirty_line_fraction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> MitigationConfig:
        known = {"scrub_rate", "frame_ecc", "interleaving", "cache_policy", "dirty_line_fraction"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown mitigation fields {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# primitives


def sample_arrivals(rate: float, horizon: float, seed=None) -> np.ndarray:
    """Event times of a homogeneous Poisson process on ``[0, horizon)``."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate == 0 or horizon <= 0:
        return np.empty(0)
    rng = _rng(seed)
    expected = rate * horizon
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, chunk))
    while times[-1] < horizon:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / rate, chunk))
        times = np.concatenate([times, more])
    return times[times < horizon]


def sample_shapes(dist: ShapeDistribution, n: int, seed=None) -> np.ndarray:
    """Indices into ``dist.entries`` for ``n`` independent draws."""
    return _rng(seed).choice(len(dist.entries), size=n, p=dist.probabilities)


def place_upset(shape: ShapeSignature, geometry: MemoryGeometry, seed=None, cycle: int = 0) -> set[UpsetBit]:
    """Put ``shape`` at a uniformly random anchor where it fits entirely inside ``geometry``."""
    if shape.frame_extent > geometry.frame_count or shape.bit_extent > geometry.bits_per_frame:
        raise ValueError(f"shape {shape.label()} does not fit in {geometry.name}")
    rng = _rng(seed)
    f0 = int(rng.integers(0, geometry.frame_count - shape.frame_extent + 1))
    b0 = int(rng.integers(0, geometry.bits_per_frame - shape.bit_extent + 1))
    return {UpsetBit(cycle, f0 + df, b0 + db) for df, db in shape.offsets}


def interleave(shape: ShapeSignature) -> ShapeSignature:
    """Spread bits sharing a frame over distinct frames, keeping their bit offsets."""
    k = shape.max_frame_multiplicity
    if k == 1:
        return shape
    by_frame: dict[int, list[int]] = {}
    for f, b in shape.sorted_offsets():
        by_frame.setdefault(f, []).append(b)
    return ShapeSignature.of((f * k + j, b) for f, bits in by_frame.items() for j, b in enumerate(bits))


def upset_outcome(shape: ShapeSignature, policy: str) -> int:
    """What ``policy`` does with one upset of ``shape``: OK, FAIL or FAIL_IF_DIRTY."""
    per_frame = {}
    for f, _ in shape.offsets:
        per_frame[f] = per_frame.get(f, 0) + 1
    m = max(per_frame.values())
    if policy == "none":
        return FAIL
    if policy == "frame-ecc":
        return OK if m == 1 else FAIL
    if policy == "secded-correct":
        # double errors are detected and the line invalidated; lost only if dirty
        return OK if m == 1 else FAIL_IF_DIRTY if m == 2 else FAIL
    if policy == "parity-detect-invalidate":
        if any(c % 2 == 0 for c in per_frame.values()):
            return FAIL  # even multiplicity escapes parity
        return FAIL_IF_DIRTY
    raise ValueError(f"unknown policy {policy!r}")


# ---------------------------------------------------------------------------
# results


@dataclass
class SimResult:
    trials: int
    seed: int
    failure_times: np.ndarray
    censored: np.ndarray
    mean_time: MeanTime
    std_error: float | None
    failure_counts: dict[str, int] = field(default_factory=dict)
    analytic_rate: float | None = None
    backlog_grid: np.ndarray | None = None
    backlog_mean_series: np.ndarray | None = None
    backlog_steady_state: float | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_failures(self) -> int:
        return int((~self.censored).sum())

    def to_dict(self) -> dict:
        d = {
            "trials": self.trials,
            "seed": self.seed,
            "config": self.config,
            "failures": self.n_failures,
            "censored": int(self.censored.sum()),
            "metric": self.mean_time.label,
            "mean_time_hours": self.mean_time.hours if self.mean_time.observed else None,
            "mean_time_months": self.mean_time.months if self.mean_time.observed else None,
            "std_error_hours": self.std_error,
            "failure_counts": self.failure_counts,
            "analytic_rate_per_hour": self.analytic_rate,
        }
        if self.backlog_grid is not None:
            d["backlog_steady_state"] = self.backlog_steady_state
            d["backlog_grid"] = self.backlog_grid.tolist()
            d["backlog_mean_series"] = self.backlog_mean_series.tolist()
        return d

    def write_samples_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "time_hours", "censored"])
            for i, (t, c) in enumerate(zip(self.failure_times, self.censored)):
                w.writerow([i, repr(float(t)), int(c)])


def _estimate(times: np.ndarray, censored: np.ndarray, kind: str) -> tuple[MeanTime, float | None]:
    n_fail = int((~censored).sum())
    if n_fail == 0:
        return NoFailuresObserved(kind), None
    if not censored.any():
        est = float(times.mean())
        se = float(times.std(ddof=1) / math.sqrt(len(times))) if len(times) > 1 else None
        return MeanTimeTo(est, kind), se
    # exponential MLE with right-censoring: total time on test / failures
    est = float(times.sum()) / n_fail
    return MeanTimeTo(est, kind), est / math.sqrt(n_fail)


# ---------------------------------------------------------------------------
# campaigns


def run_scrub_race(
    arrival_rate: float,
    scrub_rate: float,
    horizon: float,
    trials: int,
    seed: int = 0,
    scan_latency: float = 0.0,
    grid_points: int = 200,
) -> SimResult:
    """Backlog of uncorrected upsets when a scrubber races the arrivals (all rates per minute).

    Each upset becomes visible to the scrubber after a uniform share of the
    full-device ``scan_latency`` and then waits for a correction slot of
    ``1 / scrub_rate`` minutes. The steady-state backlog is the time average
    over the second half of the horizon.
    """
    if arrival_rate < 0 or scrub_rate < 0 or scan_latency < 0:
        raise ValueError("rates and latency must be non-negative")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    grid = np.linspace(0.0, horizon, grid_points)
    series = np.zeros((trials, grid_points))
    for t in range(trials):
        rng = trial_rng(seed, t)
        arrivals = sample_arrivals(arrival_rate, horizon, rng)
        arrived = np.searchsorted(arrivals, grid, side="right")
        if scrub_rate > 0 and arrivals.size:
            ready = np.sort(arrivals + rng.uniform(0.0, scan_latency, arrivals.size)) if scan_latency else arrivals
            s = 1.0 / scrub_rate
            k = np.arange(ready.size)
            # FIFO single server: c_k = (k+1)s + max_{j<=k}(r_j - j s)
            done = (k + 1) * s + np.maximum.accumulate(ready - k * s)
            corrected = np.searchsorted(done, grid, side="right")
        else:
            corrected = 0
        series[t] = arrived - corrected
    mean_series = series.mean(axis=0)
    steady = float(series[:, grid >= horizon / 2].mean())
    return SimResult(
        trials=trials,
        seed=seed,
        failure_times=np.empty(0),
        censored=np.empty(0, dtype=bool),
        mean_time=NoFailuresObserved("upset"),
        std_error=None,
        backlog_grid=grid,
        backlog_mean_series=mean_series,
        backlog_steady_state=steady,
        config={"mode": "scrub_race", "arrival_rate_per_min": arrival_rate, "scrub_rate_per_min": scrub_rate,
                "horizon_min": horizon, "scan_latency_min": scan_latency},
    )


@dataclass
class _ArrayModel:
    name: str
    rate: float
    shape_probs: np.ndarray
    outcomes: np.ndarray  # per shape: OK / FAIL / FAIL_IF_DIRTY
    fail_prob: float


def _array_models(profile: DeviceProfile, mitigation: MitigationConfig, flux: float, n_devices: int) -> list[_ArrayModel]:
    models = []
    for m in profile.memories:
        dist = m.shape_distribution()
        policy = mitigation.policy_for(m)
        shapes = [interleave(s) if mitigation.interleaving else s for s in dist.shapes]
        outcomes = np.array([upset_outcome(s, policy) for s in shapes])
        probs = dist.probabilities
        p_fail = float(probs[outcomes == FAIL].sum() + mitigation.dirty_line_fraction * probs[outcomes == FAIL_IF_DIRTY].sum())
        models.append(_ArrayModel(m.name, m.arrival_rate(flux) * n_devices, probs, outcomes, p_fail))
    return models


def _first_failure(model: _ArrayModel, rng: np.random.Generator, limit: float, dirty: float) -> float:
    """Time of the first arrival that defeats mitigation, or ``inf`` if none before ``limit``."""
    # chunk size only affects speed, not the sampled process
    chunk = int(min(1 << 16, max(32, 4.0 / model.fail_prob)))
    t0 = 0.0
    while t0 < limit:
        times = t0 + np.cumsum(rng.exponential(1.0 / model.rate, chunk))
        shape_idx = rng.choice(len(model.shape_probs), size=chunk, p=model.shape_probs)
        out = model.outcomes[shape_idx]
        is_dirty = rng.random(chunk) < dirty
        failed = (out == FAIL) | ((out == FAIL_IF_DIRTY) & is_dirty)
        hits = np.flatnonzero(failed)
        if hits.size:
            t = times[hits[0]]
            return t if t < limit else math.inf
        t0 = times[-1]
    return math.inf


def run_failure_campaign(
    profile: DeviceProfile,
    mitigation: MitigationConfig,
    env: Environment,
    trials: int,
    seed: int = 0,
    deployment: Deployment = Deployment(),
    horizon: float | None = None,
) -> SimResult:
    """Time to first unmitigated upset over all arrays of ``deployment.n_devices`` devices (hours).

    Arrays whose mitigation absorbs every possible shape are never sampled.
    Without a ``horizon`` every trial runs until its first failure.
    """
    if not profile.memories:
        raise ValueError(f"profile {profile.name!r} has no memory arrays")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    flux = env.resolved_flux.value
    models = [m for m in _array_models(profile, mitigation, flux, deployment.n_devices) if m.rate > 0 and m.fail_prob > 0]
    limit = math.inf if horizon is None else float(horizon)
    if not models and horizon is None:
        raise ValueError("mitigation absorbs every upset; give a horizon to simulate censored trials")

    times = np.empty(trials)
    counts = {m.name: 0 for m in profile.memories}
    for t in range(trials):
        rng = trial_rng(seed, t)
        best, who = limit, None
        for model in models:
            ft = _first_failure(model, rng, best, mitigation.dirty_line_fraction)
            if ft < best:
                best, who = ft, model.name
        times[t] = best
        if who is not None:
            counts[who] += 1
    censored = ~np.isfinite(times) | (times >= limit)
    if horizon is not None:
        times = np.minimum(times, limit)
    kind = "upset" if not any(mitigation.policy_for(m) != "none" for m in profile.memories) else "failure"
    mean_time, se = _estimate(times, censored, kind)
    analytic = sum(m.rate * m.fail_prob for m in models)
    return SimResult(
        trials=trials,
        seed=seed,
        failure_times=times,
        censored=censored,
        mean_time=mean_time,
        std_error=se,
        failure_counts=counts,
        analytic_rate=analytic,
        config={"mode": "failure", "profile": profile.name, "environment": env.name, "flux": flux,
                "nodes": deployment.n_devices, "horizon_hours": horizon, "mitigation": mitigation.to_dict()},
    )


def analytic_mttu_hours(profile: DeviceProfile, env: Environment, deployment: Deployment = Deployment()) -> float:
    """1 / (sum of per-array upset rates), no mitigation."""
    total = sum(m.arrival_rate(env.resolved_flux.value) for m in profile.memories) * deployment.n_devices
    return 1.0 / total
