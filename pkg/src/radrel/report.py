"""Report assembly and rendering (JSON, Markdown, CSV)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .profiles import DeviceProfile
from .projection import (
    PRESETS,
    Deployment,
    Environment,
    mttf_table,
    project,
    ratio_report,
    scale_mean_time,
)
from .readback import ReadbackAnalysis, shape_histogram, static_cross_section, CRAM_SHAPE_PERCENTAGES
from .sim import SimResult
from .stats import (
    DEFAULT_CONFIDENCE,
    CampaignLog,
    breakdown_from_log,
    dynamic_cross_sections,
    estimate_cross_section,
)
from .units import HOURS_PER_MONTH, MeanTimeTo, NYC_SEA_LEVEL_FLUX

SW_ONLY = ("BareC", "LFRic", "SVO")


@dataclass
class Section:
    name: str
    columns: list[str]
    rows: list[dict[str, Any]]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "columns": self.columns, "rows": self.rows, "notes": self.notes}


@dataclass
class Report:
    title: str
    command: str
    inputs_digest: str
    provenance: dict[str, Any]
    sections: list[Section]

    def section(self, name: str) -> Section:
        for s in self.sections:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "provenance": self.provenance,
            "sections": [s.to_dict() for s in self.sections],
        }

    def to_json(self) -> str:
        # repr-based float output is lossless on re-read
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Report:
        d = json.loads(text)
        return cls(
            title=d["title"],
            command=d["command"],
            inputs_digest=d["inputs_digest"],
            provenance=d["provenance"],
            sections=[Section(s["name"], s["columns"], s["rows"], s.get("notes", [])) for s in d["sections"]],
        )

    def to_markdown(self) -> str:
        out = [f"# {self.title}", ""]
        for k, v in sorted(self.provenance.items()):
            out.append(f"- {k}: {v}")
        out.append(f"- inputs digest: `{self.inputs_digest[:16]}`")
        for s in self.sections:
            out += ["", f"## {s.name}", ""]
            out.append("| " + " | ".join(s.columns) + " |")
            out.append("|" + "---|" * len(s.columns))
            for row in s.rows:
                out.append("| " + " | ".join(_fmt(row.get(c)) for c in s.columns) + " |")
            for note in s.notes:
                out.append(f"\n> {note}")
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        for s in self.sections:
            buf.write(f"# {s.name}\n")
            w = csv.DictWriter(buf, fieldnames=s.columns, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for row in s.rows:
                w.writerow({c: "" if row.get(c) is None else row.get(c) for c in s.columns})
            buf.write("\n")
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "md":
            return self.to_markdown()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}")


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        if v == 0:
            return "0"
        if abs(v) < 1e-3 or abs(v) >= 1e6:
            return f"{v:.3E}"
        return f"{v:.4G}"
    return str(v)


def digest(*parts: Any) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p if isinstance(p, bytes) else json.dumps(p, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _xs_row(label: str, est, **extra) -> dict:
    row = {"name": label, "events": est.n_events, "fluence": est.fluence,
           "mean": est.mean if est.observed else None, "ci_low": est.ci_low, "ci_high": est.ci_high}
    row.update(extra)
    return row


# ---------------------------------------------------------------------------
# readback


def readback_report(
    analyses: Sequence[ReadbackAnalysis],
    confidence: float = DEFAULT_CONFIDENCE,
    fluence_uncertainty: float = 0.0,
    inputs_digest: str = "",
) -> Report:
    xs_rows, shape_rows, sefi_rows, class_rows = [], [], [], []
    for a in analyses:
        g = a.campaign_geometry
        dev = static_cross_section(a, False, confidence=confidence, fluence_uncertainty=fluence_uncertainty)
        bit = static_cross_section(a, True, confidence=confidence, fluence_uncertainty=fluence_uncertainty)
        xs_rows.append({
            "memory": g.name, "kind": g.kind, "fluence": a.fluence, "upsets": a.upset_bits,
            "sigma_device": dev.mean if dev.observed else None, "sigma_device_ci_low": dev.ci_low,
            "sigma_device_ci_high": dev.ci_high, "sigma_bit": bit.mean if bit.observed else None,
            "bit_count": g.total_bits, "sefis": len(a.sefis),
        })
        class_rows.append({"memory": g.name, **a.class_counts()})
        for e in a.sefis:
            blocks = sorted({g.block_of(b.frame) for b in e.bits})
            sefi_rows.append({"memory": g.name, "cycle": e.cycle, "bits": e.size,
                              "blocks": ";".join(map(str, blocks)),
                              "first_frame": e.bits[0].frame, "last_frame": e.bits[-1].frame})
        if a.nseu_events:
            dist = shape_histogram(a.nseu_events)
            counts = {}
            for e in a.nseu_events:
                counts[e.shape] = counts.get(e.shape, 0) + 1
            for s, p in dist.entries:
                shape_rows.append({"memory": g.name, "shape": s.label(), "frame_extent": s.frame_extent,
                                   "bit_extent": s.bit_extent, "events": counts[s], "percent": 100.0 * p})
    sections = [
        Section("cross_sections", ["memory", "kind", "fluence", "upsets", "sigma_device", "sigma_device_ci_low",
                                   "sigma_device_ci_high", "sigma_bit", "bit_count", "sefis"], xs_rows,
                ["Upsets exclude SEFI-attributed bits; persistent upsets are counted once per configuration."]),
        Section("event_classes", ["memory", "SBU", "MBU", "MCU", "SEFI"], class_rows),
        Section("shapes", ["memory", "shape", "frame_extent", "bit_extent", "events", "percent"], shape_rows),
        Section("sefi", ["memory", "cycle", "bits", "blocks", "first_frame", "last_frame"], sefi_rows),
    ]
    return Report("Readback analysis", "analyze-readback", inputs_digest,
                  {"confidence": confidence, "fluence_uncertainty": fluence_uncertainty}, sections)


# ---------------------------------------------------------------------------
# dynamic cross-sections


def combined_log(logs: Sequence[CampaignLog], name: str = "Total") -> CampaignLog:
    counts = {}
    for log in logs:
        for c, n in log.counts.items():
            counts[c] = counts.get(c, 0) + n
    return CampaignLog(name, sum(l.fluence for l in logs), sum(l.runs for l in logs), counts)


def xsection_report(
    logs: Sequence[CampaignLog],
    flux: float = NYC_SEA_LEVEL_FLUX,
    confidence: float = DEFAULT_CONFIDENCE,
    fluence_uncertainty: float = 0.0,
    inputs_digest: str = "",
) -> Report:
    logs = list(logs)
    if len(logs) > 1:
        logs.append(combined_log(logs))
    xs_rows, bd_rows = [], []
    for log in logs:
        for cat, est in dynamic_cross_sections(log, confidence, fluence_uncertainty).items():
            xs_rows.append(_xs_row(log.benchmark, est, category=cat, runs=log.runs))
        b = breakdown_from_log(log, flux)
        bd_rows.append({"name": log.benchmark, **b.to_dict()})
    sections = [
        Section("dynamic_cross_sections", ["name", "category", "runs", "events", "fluence", "mean", "ci_low", "ci_high"],
                xs_rows, ["'-' marks categories with no observed events; ci_high is then a one-sided bound."]),
        Section("fit_breakdown", ["name", "fit_critical", "fit_tolerable", "fit_hang", "fit_all", "fit_c_plus_h"],
                bd_rows, [f"FIT at {flux} n/cm2/h."]),
    ]
    return Report("Dynamic cross-sections", "xsection", inputs_digest,
                  {"confidence": confidence, "fluence_uncertainty": fluence_uncertainty, "flux": flux}, sections)


# ---------------------------------------------------------------------------
# projections


def _proj_dict(row, group: str) -> dict:
    d = row.to_dict()
    d["group"] = group
    return d


def projection_sections(profile: DeviceProfile, env: Environment, dep: Deployment) -> list[Section]:
    mem_rows = []
    for group in ("pl", "cache"):
        members = profile.memories_in(group)
        if not members:
            continue
        for m in members:
            mem_rows.append(_proj_dict(project(m.device_sigma, env, dep, m.name), group))
        total = sum(m.device_sigma for m in members)
        mem_rows.append(_proj_dict(project(total, env, dep, f"{group.upper()} total"), group))

    notes = []
    base_months = profile.metadata.get("cache_mttu_base_months")
    if base_months:
        scaled = scale_mean_time(MeanTimeTo(base_months * HOURS_PER_MONTH, "upset"), env, dep)
        mem_rows.append({"subject": "cache (published base)", "group": "cache", "environment": env.name,
                         "flux": env.resolved_flux.value, "n_devices": dep.n_devices, "fit": 1e9 / scaled.hours,
                         "metric": "MTTU", "hours": scaled.hours, "months": scaled.months, "variant": None})
        notes.append(f"Cache MTTU base {base_months} months (sea level, one device) taken from the profile.")

    app_rows = mttf_table(profile.breakdowns(), env, dep)
    apps = [_proj_dict(r, profile.application(r.subject).group) for r in app_rows]

    ratio_rows = []
    rr = ratio_report(app_rows)
    names = {a.name for a in profile.applications}
    if "DPU" in names:
        ratio_rows.append({"comparison": "DPU C+H / DPU All", "value": rr.ratio("DPU/C+H", "DPU/All")})
    if {"SVO", "LFRic"} <= names:
        for v in ("All", "C+H"):
            ratio_rows.append({"comparison": f"1 - SVO {v} / LFRic {v}", "value": rr.degradation(f"SVO/{v}", f"LFRic/{v}")})
    sw = [n for n in SW_ONLY if n in names]
    if sw and "DPU" in names:
        ratio_rows.append({"comparison": f"mean({', '.join(sw)}) All / DPU All",
                           "value": rr.mean_ratio([f"{n}/All" for n in sw], "DPU/All")})
        ratio_rows.append({"comparison": f"mean({', '.join(sw)}) C+H / DPU C+H",
                           "value": rr.mean_ratio([f"{n}/C+H" for n in sw], "DPU/C+H")})
    if rr.excluded:
        notes_r = [f"No observed failures (excluded): {', '.join(rr.excluded)}."]
    else:
        notes_r = []
    cols = ["subject", "group", "variant", "environment", "n_devices", "fit", "metric", "hours", "months"]
    return [
        Section("memory_mttu", cols, mem_rows, notes),
        Section("application_mttf", cols, apps),
        Section("ratios", ["comparison", "value"], ratio_rows, notes_r + ["Ratios do not depend on environment or node count."]),
    ]


def projection_report(profile: DeviceProfile, env: Environment, dep: Deployment) -> Report:
    return Report(
        f"Reliability projection: {profile.name}, {env.name}, {dep.n_devices} node(s)",
        "project",
        digest(profile.name, env.name, dep.n_devices),
        {"profile": profile.name, "environment": env.name, "flux": env.resolved_flux.value,
         "nodes": dep.n_devices, "hours_per_month": HOURS_PER_MONTH},
        projection_sections(profile, env, dep),
    )


# ---------------------------------------------------------------------------
# profile reproduction


def profile_report(
    profile: DeviceProfile, confidence: float = DEFAULT_CONFIDENCE, fluence_uncertainty: float = 0.0
) -> Report:
    """Recompute every stored cross-section from its counts next to the published value, plus projections."""
    kw = dict(confidence=confidence, fluence_uncertainty=fluence_uncertainty)
    mem_rows = []
    for m in profile.memories:
        row = {"name": m.name, "group": m.group, "bit_count": m.bit_count, "published_sigma_bit": m.sigma_bit,
               "published_sigma_device": m.device_sigma, "published_ci_low": m.ci_low, "published_ci_high": m.ci_high,
               "citation": m.citation}
        if m.n_events is not None and m.fluence:
            est_b = m.estimate(per_bit=True, **kw)
            est_d = m.estimate(per_bit=False, **kw)
            row.update(events=m.n_events, fluence=m.fluence, sigma_bit=est_b.mean, ci_low=est_b.ci_low,
                       ci_high=est_b.ci_high, sigma_device=est_d.mean)
        mem_rows.append(row)
    for name, agg in profile.aggregates.items():
        est = estimate_cross_section(agg["n_events"], agg["fluence"], agg["bit_count"], **kw)
        lo_hi = agg.get("printed", [None, None, None])
        mem_rows.append({"name": name, "group": "aggregate", "bit_count": agg["bit_count"], "events": agg["n_events"],
                         "fluence": agg["fluence"], "sigma_bit": est.mean, "ci_low": est.ci_low, "ci_high": est.ci_high,
                         "published_sigma_bit": lo_hi[0], "published_ci_low": lo_hi[1], "published_ci_high": lo_hi[2],
                         "citation": agg.get("citation", "")})
    app_rows = []
    for a in profile.applications:
        for cat, est in dynamic_cross_sections(a.log, **kw).items():
            printed = a.printed.get(cat, [None, None, None])
            if est.n_events == 0 and cat not in a.printed and cat != "sdc":
                continue
            app_rows.append({**_xs_row(a.name, est, category=cat, runs=a.log.runs, group=a.group),
                             "published_mean": printed[0], "published_ci_low": printed[1],
                             "published_ci_high": printed[2]})
    sections = [
        Section("memory_cross_sections",
                ["name", "group", "bit_count", "events", "fluence", "sigma_bit", "ci_low", "ci_high", "sigma_device",
                 "published_sigma_bit", "published_ci_low", "published_ci_high", "published_sigma_device", "citation"],
                mem_rows),
        Section("application_cross_sections",
                ["name", "group", "category", "runs", "events", "fluence", "mean", "ci_low", "ci_high",
                 "published_mean", "published_ci_low", "published_ci_high"], app_rows),
        Section("cram_shapes", ["shape", "frame_extent", "bit_extent", "published_percent", "probability"],
                [{"shape": s.label(), "frame_extent": s.frame_extent, "bit_extent": s.bit_extent,
                  "published_percent": pct, "probability": pct / sum(p for _, p in CRAM_SHAPE_PERCENTAGES)}
                 for s, pct in CRAM_SHAPE_PERCENTAGES],
                ["Probabilities renormalize the published percentages, which sum to 99.72."]),
    ]
    for label, (env, dep) in PRESETS.items():
        for s in projection_sections(profile, env, dep):
            if s.name == "ratios" and label != "1 node, 40k ft":
                continue
            sections.append(Section(f"{s.name} [{label}]", s.columns, s.rows, s.notes))
    meta = {k: v for k, v in profile.metadata.items() if k != "notes"}
    return Report(
        f"Device profile report: {profile.name}",
        "report",
        digest(profile.name, [m.citation for m in profile.memories]),
        {"profile": profile.name, "authoritative": profile.authoritative, "confidence": confidence,
         "fluence_uncertainty": fluence_uncertainty, **meta, "notes": profile.metadata.get("notes", [])},
        sections,
    )


# ---------------------------------------------------------------------------
# simulation


def simulation_report(result: SimResult, analytic_hours: float | None = None, inputs_digest: str = "") -> Report:
    d = result.to_dict()
    summary = {k: v for k, v in d.items() if k not in ("backlog_grid", "backlog_mean_series", "config", "failure_counts")}
    if analytic_hours is not None:
        summary["analytic_mean_time_hours"] = analytic_hours
        if result.std_error and result.mean_time.observed:
            summary["z_vs_analytic"] = (result.mean_time.hours - analytic_hours) / result.std_error
    sections = [Section("summary", list(summary), [summary])]
    if result.failure_counts:
        sections.append(Section("failure_counts", ["array", "first_failures"],
                                [{"array": k, "first_failures": v} for k, v in result.failure_counts.items()]))
    if result.backlog_grid is not None:
        sections.append(Section("backlog", ["time_min", "mean_backlog"],
                                [{"time_min": float(t), "mean_backlog": float(b)}
                                 for t, b in zip(result.backlog_grid, result.backlog_mean_series)]))
    return Report("Soft-error simulation", "simulate", inputs_digest,
                  {"seed": result.seed, **{k: v for k, v in result.config.items() if k != "mitigation"},
                   "mitigation": result.config.get("mitigation")}, sections)


def iter_numbers(report: Report) -> Iterable[float]:
    for s in report.sections:
        for row in s.rows:
            for v in row.values():
                if isinstance(v, float):
                    yield v
