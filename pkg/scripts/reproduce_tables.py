"""Recompute every stored cross-section and projection for a device profile.

    python3 scripts/reproduce_tables.py --profile xczu9eg --format md -o out/tables.md
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

from radrel.profiles import load_profile
from radrel.report import profile_report


@dataclass(frozen=True)
class Config:
    profile: str = "xczu9eg"
    confidence: float = 0.95
    fluence_uncertainty: float = 0.0
    fmt: str = "md"
    output: Path | None = None


def run(cfg: Config) -> str:
    rep = profile_report(load_profile(cfg.profile), cfg.confidence, cfg.fluence_uncertainty)
    text = rep.render(cfg.fmt)
    if cfg.output:
        cfg.output.parent.mkdir(parents=True, exist_ok=True)
        cfg.output.write_text(text)
    return text


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--profile", default=Config.profile)
    p.add_argument("--confidence", type=float, default=Config.confidence)
    p.add_argument("--fluence-uncertainty", type=float, default=Config.fluence_uncertainty)
    p.add_argument("--format", dest="fmt", choices=("json", "md", "csv"), default=Config.fmt)
    p.add_argument("-o", "--output", type=Path)
    cfg = Config(**vars(p.parse_args()))
    text = run(cfg)
    if cfg.output is None:
        print(text, end="")


if __name__ == "__main__":
    main()
