"""Steady-state uncorrected backlog as a function of scrub rate.

Emits plot-ready CSV: scrub_rate_per_min, scan_latency_min, backlog_mean.

    python3 scripts/scrub_rate_sweep.py --arrival 8 --rates 4 8 16 64 256 1700
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

from radrel.sim import run_scrub_race


@dataclass(frozen=True)
class Config:
    arrival_rate: float = 8.0
    scrub_rates: tuple[float, ...] = (4.0, 8.0, 16.0, 64.0, 256.0, 1700.0)
    scan_latencies: tuple[float, ...] = (0.0,)
    horizon_min: float = 600.0
    trials: int = 100
    seed: int = 0


def run(cfg: Config) -> list[dict]:
    rows = []
    for lat in cfg.scan_latencies:
        for rate in cfg.scrub_rates:
            r = run_scrub_race(cfg.arrival_rate, rate, cfg.horizon_min, cfg.trials, cfg.seed, lat)
            rows.append({"scrub_rate_per_min": rate, "scan_latency_min": lat,
                         "backlog_mean": r.backlog_steady_state})
    return rows


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--arrival", type=float, default=Config.arrival_rate)
    p.add_argument("--rates", type=float, nargs="+", default=list(Config.scrub_rates))
    p.add_argument("--latencies", type=float, nargs="+", default=list(Config.scan_latencies))
    p.add_argument("--horizon", type=float, default=Config.horizon_min)
    p.add_argument("--trials", type=int, default=Config.trials)
    p.add_argument("--seed", type=int, default=Config.seed)
    a = p.parse_args()
    cfg = Config(a.arrival, tuple(a.rates), tuple(a.latencies), a.horizon, a.trials, a.seed)
    w = csv.DictWriter(sys.stdout, ["scrub_rate_per_min", "scan_latency_min", "backlog_mean"], lineterminator="\n")
    w.writeheader()
    w.writerows(run(cfg))


if __name__ == "__main__":
    main()
