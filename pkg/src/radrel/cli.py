"""Command-line interface: ``radrel <command> ...``.

Exit status is 0 on success, 1 for validation errors (bad parameters, unknown
environments, inconsistent counts) and 2 for malformed input files.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .profiles import ProfileError, list_profiles, load_profile
from .projection import ENVIRONMENTS, Deployment, get_environment
from .readback import (
    DEFAULT_SEFI_THRESHOLD,
    MEMORY_KINDS,
    ContainerFormatError,
    MemoryGeometry,
    analyze_bits,
    analyze_campaign,
    read_container,
    read_diff_csv,
)
from .report import (
    digest,
    profile_report,
    projection_report,
    readback_report,
    simulation_report,
    xsection_report,
)
from .sim import MitigationConfig, analytic_mttu_hours, run_failure_campaign, run_scrub_race
from .stats import DEFAULT_CONFIDENCE, LogFormatError, load_campaign_logs
from .units import NYC_SEA_LEVEL_FLUX

EXIT_OK, EXIT_VALIDATION, EXIT_MALFORMED = 0, 1, 2


class MalformedInput(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE, help="two-sided CI level (default 0.95)")
    p.add_argument("--fluence-uncertainty", type=float, default=0.0,
                   help="relative fluence uncertainty folded into the CI (e.g. 0.1)")
    p.add_argument("--seed", type=int, default=None, help="master RNG seed (simulate)")
    p.add_argument("--format", choices=("json", "md", "csv"), default="md")
    p.add_argument("-o", "--output", type=Path, default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radrel", description="Radiation reliability analysis for SRAM-based MPSoCs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-readback", help="diff readback containers and estimate static cross-sections")
    p.add_argument("inputs", nargs="+", type=Path, help="RBKC containers (.rbkc) or diff CSVs (cycle,frame,bit)")
    p.add_argument("--name", action="append", default=None, help="memory name per input (repeatable)")
    p.add_argument("--kind", choices=MEMORY_KINDS, default="CRAM")
    p.add_argument("--block-frames", type=int, default=1, help="frames per SEFI block")
    p.add_argument("--sefi-threshold", type=int, default=DEFAULT_SEFI_THRESHOLD)
    g = p.add_argument_group("diff CSV inputs")
    g.add_argument("--frames", type=int)
    g.add_argument("--bits-per-frame", type=int)
    g.add_argument("--fluence", type=float)
    g.add_argument("--config-period", type=int, default=50)
    _common(p)

    p = sub.add_parser("xsection", help="dynamic cross-sections and FIT breakdown from campaign logs")
    p.add_argument("logs", nargs="+", type=Path, help="campaign logs (JSON or benchmark,category,count CSV)")
    p.add_argument("--flux", type=float, default=NYC_SEA_LEVEL_FLUX, help="flux for FIT values, n/cm2/h")
    _common(p)

    p = sub.add_parser("project", help="MTTU / MTTF projections for a device profile")
    p.add_argument("--profile", default="xczu9eg")
    p.add_argument("--env", default="nyc_sea_level", help=f"one of {', '.join(ENVIRONMENTS)}")
    p.add_argument("--nodes", type=int, default=1)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo failure or scrub-race campaign from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--samples", type=Path, default=None, help="write per-trial times as CSV")
    _common(p)

    p = sub.add_parser("report", help="full reproduction report for a device profile")
    p.add_argument("--profile", default="xczu9eg")
    _common(p)

    sub.add_parser("profiles", help="list available device profiles")
    return parser


def _check_common(args) -> None:
    if not 0 < args.confidence < 1:
        raise ValueError("--confidence must be in (0, 1)")
    if not 0 <= args.fluence_uncertainty < 1:
        raise ValueError("--fluence-uncertainty must be in [0, 1)")


def _readback(args):
    names = args.name or []
    if names and len(names) != len(args.inputs):
        raise ValueError("give one --name per input")
    analyses = []
    for i, path in enumerate(args.inputs):
        name = names[i] if names else path.stem
        if path.suffix.lower() == ".csv":
            if args.frames is None or args.bits_per_frame is None or args.fluence is None:
                raise ValueError("diff CSV input needs --frames, --bits-per-frame and --fluence")
            geometry = MemoryGeometry(name, args.kind, args.frames, args.bits_per_frame, args.block_frames)
            cycles = read_diff_csv(path)
            analyses.append(analyze_bits(cycles, geometry, args.fluence, args.config_period, args.sefi_threshold))
        else:
            campaign = read_container(path, name, args.kind, args.block_frames)
            analyses.append(analyze_campaign(campaign, args.sefi_threshold))
    d = digest(*(p.read_bytes() for p in args.inputs))
    return readback_report(analyses, args.confidence, args.fluence_uncertainty, d)


def _xsection(args):
    logs = []
    for path in args.logs:
        logs.extend(load_campaign_logs(path))
    d = digest(*(p.read_bytes() for p in args.logs))
    return xsection_report(logs, args.flux, args.confidence, args.fluence_uncertainty, d)


def _simulate(args):
    raw = args.config.read_bytes()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{args.config}: invalid JSON at char {exc.pos}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise MalformedInput(f"{args.config}: expected a JSON object")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    trials = int(cfg.get("trials", 1000))
    mode = cfg.get("mode", "failure")
    if mode == "scrub_race":
        result = run_scrub_race(
            float(cfg["arrival_rate_per_min"]), float(cfg["scrub_rate_per_min"]), float(cfg["horizon_min"]),
            trials, seed, float(cfg.get("scan_latency_min", 0.0)), int(cfg.get("grid_points", 200)),
        )
        analytic = None
    elif mode == "failure":
        profile = load_profile(cfg.get("profile", "xczu9eg"))
        env = get_environment(cfg.get("environment", "nyc_sea_level"))
        dep = Deployment(int(cfg.get("nodes", 1)))
        mit = cfg.get("mitigation", "off")
        if mit == "off":
            mitigation = MitigationConfig.off()
        elif mit == "native":
            mitigation = MitigationConfig.native(profile)
        elif isinstance(mit, dict):
            mitigation = MitigationConfig.from_dict(mit)
        else:
            raise ValueError(f"mitigation must be 'off', 'native' or an object, got {mit!r}")
        horizon = cfg.get("horizon_hours")
        result = run_failure_campaign(profile, mitigation, env, trials, seed, dep,
                                      None if horizon is None else float(horizon))
        analytic = analytic_mttu_hours(profile, env, dep) if mit == "off" else (
            1.0 / result.analytic_rate if result.analytic_rate else None)
    else:
        raise ValueError(f"unknown simulation mode {mode!r}")
    if args.samples is not None:
        result.write_samples_csv(args.samples)
    return simulation_report(result, analytic, digest(raw, seed))


def _dispatch(args):
    if args.command == "analyze-readback":
        return _readback(args)
    if args.command == "xsection":
        return _xsection(args)
    if args.command == "project":
        return projection_report(load_profile(args.profile), get_environment(args.env), Deployment(args.nodes))
    if args.command == "simulate":
        return _simulate(args)
    if args.command == "report":
        return profile_report(load_profile(args.profile), args.confidence, args.fluence_uncertainty)
    raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "profiles":
        print("\n".join(list_profiles()))
        return EXIT_OK
    try:
        _check_common(args)
        report = _dispatch(args)
    except (ContainerFormatError, LogFormatError, MalformedInput, UnicodeDecodeError) as exc:
        print(f"radrel: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except FileNotFoundError as exc:
        print(f"radrel: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (ValueError, KeyError, ProfileError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"radrel: invalid input: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    text = report.render(args.format)
    if args.output is not None:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
