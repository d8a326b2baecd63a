import csv
import io
import json

import numpy as np
import pytest

from radrel.cli import EXIT_MALFORMED, EXIT_OK, EXIT_VALIDATION, main
from radrel.profiles import load_profile
from radrel.readback import MemoryGeometry, ReadbackCampaign, UpsetBit, write_container, write_diff_csv
from radrel.report import Report, iter_numbers
from radrel.sim import analytic_mttu_hours
from radrel.projection import PRESETS


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def srl_container(tmp_path):
    g = MemoryGeometry("SRL", "SRL", 128, 256)
    golden = np.zeros(g.total_bits, np.uint8)
    c0 = golden.copy()
    c0[5 * 256:6 * 256] = 1  # whole-slice burst
    c0[40 * 256 + 3] = 1
    c1 = c0.copy()
    c1[90 * 256 + 17] = 1
    camp = ReadbackCampaign.from_bits(g, golden, np.ones_like(golden), [c0, c1], 1.2e11, 50)
    path = tmp_path / "srl.rbkc"
    write_container(path, camp)
    return path


@pytest.fixture
def dpu_log(tmp_path):
    path = tmp_path / "dpu.json"
    path.write_text(json.dumps({
        "benchmark": "DPU", "fluence_n_per_cm2": 5.55e10,
        "counts": {"runs": 5985, "correct": 2964, "timeout": 89, "critical_sdc": 46, "tolerable_sdc": 2886},
    }))
    return path


def test_analyze_readback_container(capsys, srl_container):
    code, out, _ = run(capsys, "analyze-readback", srl_container, "--kind", "SRL", "--format", "json")
    assert code == EXIT_OK
    rep = Report.from_json(out)
    [row] = rep.section("cross_sections").rows
    assert row["upsets"] == 2 and row["sefis"] == 1
    assert row["sigma_device"] == pytest.approx(2 / 1.2e11)
    [sefi] = rep.section("sefi").rows
    assert sefi["bits"] == 256


def test_analyze_readback_empty_diff(capsys, tmp_path):
    g = MemoryGeometry("C", "CRAM", 8, 8)
    z = np.zeros(64, np.uint8)
    p = tmp_path / "empty.rbkc"
    write_container(p, ReadbackCampaign.from_bits(g, z, np.ones_like(z), [z], 1e10))
    code, out, _ = run(capsys, "analyze-readback", p, "--name", "C", "--format", "md")
    assert code == EXIT_OK
    row = next(l for l in out.splitlines() if l.startswith("| C | CRAM |"))
    cells = [c.strip() for c in row.strip("|").split("|")]
    assert cells[3] == "0" and cells[4] == "-" and cells[5] == "-" and cells[6] != "-"


def test_analyze_readback_diff_csv(capsys, tmp_path):
    p = tmp_path / "d.csv"
    write_diff_csv(p, [UpsetBit(0, 1, 1), UpsetBit(0, 2, 2), UpsetBit(1, 7, 0)])
    base = ["analyze-readback", p, "--format", "json"]
    assert run(capsys, *base)[0] == EXIT_VALIDATION  # geometry missing
    code, out, _ = run(capsys, *base, "--frames", 16, "--bits-per-frame", 8, "--fluence", 1e9, "--name", "X")
    assert code == EXIT_OK
    rep = Report.from_json(out)
    assert rep.section("event_classes").rows[0] == {"memory": "X", "SBU": 1, "MBU": 0, "MCU": 1, "SEFI": 0}


def test_malformed_container_exit_code(capsys, tmp_path):
    p = tmp_path / "bad.rbkc"
    p.write_bytes(b"NOPE" + bytes(40))
    code, _, err = run(capsys, "analyze-readback", p)
    assert code == EXIT_MALFORMED and "byte offset 0" in err


def test_xsection_dpu(capsys, dpu_log):
    code, out, _ = run(capsys, "xsection", dpu_log, "--format", "json")
    assert code == EXIT_OK
    rows = {r["category"]: r for r in Report.from_json(out).section("dynamic_cross_sections").rows}
    assert rows["tolerable_sdc"]["mean"] == pytest.approx(5.20e-8, rel=5e-3)
    assert rows["tolerable_sdc"]["ci_low"] == pytest.approx(5.01e-8, rel=5e-3)
    assert rows["tolerable_sdc"]["ci_high"] == pytest.approx(5.39e-8, rel=5e-3)


def test_xsection_fluence_uncertainty_flag(capsys, dpu_log):
    _, a, _ = run(capsys, "xsection", dpu_log, "--format", "json")
    _, b, _ = run(capsys, "xsection", dpu_log, "--format", "json", "--fluence-uncertainty", "0.1")
    ra = {r["category"]: r for r in Report.from_json(a).section("dynamic_cross_sections").rows}
    rb = {r["category"]: r for r in Report.from_json(b).section("dynamic_cross_sections").rows}
    assert rb["all"]["ci_high"] == pytest.approx(ra["all"]["ci_high"] / 0.9)


def test_xsection_all_correct(capsys, tmp_path):
    p = tmp_path / "ok.csv"
    p.write_text("benchmark,category,count\nidle,runs,100\nidle,fluence_n_per_cm2,1e10\n")
    code, out, _ = run(capsys, "xsection", p, "--format", "md")
    assert code == EXIT_OK
    xs = out.split("## fit_breakdown")[0]
    rows = [l.split("|") for l in xs.splitlines() if l.startswith("| idle |")]
    assert len(rows) == 8
    assert all(r[6].strip() == "-" and r[7].strip() == "-" for r in rows)


def test_xsection_counts_exceed_runs(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"benchmark": "b", "fluence_n_per_cm2": 1e9, "counts": {"runs": 1, "timeout": 5}}))
    code, _, err = run(capsys, "xsection", p)
    assert code == EXIT_VALIDATION and "exceed" in err


@pytest.mark.parametrize("content", ["{not json", "benchmark,category\n"])
def test_xsection_malformed(capsys, tmp_path, content):
    p = tmp_path / ("x.csv" if "," in content and not content.startswith("{") else "x.json")
    p.write_text(content)
    assert run(capsys, "xsection", p)[0] == EXIT_MALFORMED


def test_missing_file(capsys, tmp_path):
    assert run(capsys, "xsection", tmp_path / "nope.json")[0] == EXIT_MALFORMED


@pytest.mark.parametrize("env,nodes,key,expected,tol", [
    ("nyc_40kft", 1, ("memory_mttu", "PL total"), 1.81, 0.01),
    ("nyc_40kft", 1, ("application_mttf", "DPU", "C+H"), 87, 2),
    ("nyc_sea_level", 1000, ("memory_mttu", "PL total"), 0.90, 0.01),
    ("nyc_sea_level", 1, ("application_mttf", "DPU", "All"), 1930, 40),
])
def test_project(capsys, env, nodes, key, expected, tol):
    code, out, _ = run(capsys, "project", "--profile", "xczu9eg", "--env", env, "--nodes", nodes, "--format", "json")
    assert code == EXIT_OK
    rows = Report.from_json(out).section(key[0]).rows
    row = next(r for r in rows if r["subject"] == key[1] and (len(key) < 3 or r["variant"] == key[2]))
    assert abs(row["months"] - expected) <= tol


def test_project_errors(capsys):
    assert run(capsys, "project", "--env", "mars")[0] == EXIT_VALIDATION
    assert run(capsys, "project", "--nodes", 0)[0] == EXIT_VALIDATION
    assert run(capsys, "project", "--profile", "nonexistent")[0] == EXIT_VALIDATION
    assert run(capsys, "project", "--confidence", 1.5)[0] == EXIT_VALIDATION


def test_simulate_scrub_race(capsys, tmp_path):
    cfg = tmp_path / "race.json"
    cfg.write_text(json.dumps({"mode": "scrub_race", "arrival_rate_per_min": 8, "scrub_rate_per_min": 1700,
                               "horizon_min": 300, "trials": 50, "seed": 1}))
    code, out, _ = run(capsys, "simulate", cfg, "--format", "json")
    assert code == EXIT_OK
    summary = Report.from_json(out).section("summary").rows[0]
    assert summary["backlog_steady_state"] < 1


def test_simulate_failure_matches_project(capsys, tmp_path):
    cfg = tmp_path / "off.json"
    cfg.write_text(json.dumps({"profile": "xczu9eg", "environment": "nyc_40kft", "nodes": 1, "mitigation": "off",
                               "trials": 3000, "seed": 5}))
    samples = tmp_path / "samples.csv"
    code, out, _ = run(capsys, "simulate", cfg, "--format", "json", "--samples", samples)
    assert code == EXIT_OK
    s = Report.from_json(out).section("summary").rows[0]
    env, dep = PRESETS["1 node, 40k ft"]
    assert s["analytic_mean_time_hours"] == pytest.approx(analytic_mttu_hours(load_profile("xczu9eg"), env, dep))
    assert abs(s["z_vs_analytic"]) <= 3
    rows = list(csv.DictReader(io.StringIO(samples.read_text())))
    assert len(rows) == 3000 and all(float(r["time_hours"]) >= 0 for r in rows)


@pytest.mark.parametrize("cfg,code", [
    ({"trials": 0}, EXIT_VALIDATION),
    ({"mitigation": {"dirty_line_fraction": 2}}, EXIT_VALIDATION),
    ({"mitigation": "sometimes"}, EXIT_VALIDATION),
    ({"environment": "venus"}, EXIT_VALIDATION),
    ({"mode": "warp"}, EXIT_VALIDATION),
])
def test_simulate_validation(capsys, tmp_path, cfg, code):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"trials": 10, **cfg}))
    assert run(capsys, "simulate", p)[0] == code


def test_simulate_malformed_config(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2")
    assert run(capsys, "simulate", p)[0] == EXIT_MALFORMED


def test_simulate_deterministic_bytes(capsys, tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"profile": "xczu9eg", "environment": "nyc_40kft", "mitigation": "native",
                             "trials": 200, "seed": 11}))
    a = run(capsys, "simulate", p, "--format", "json")[1]
    b = run(capsys, "simulate", p, "--format", "json")[1]
    assert a == b
    c = run(capsys, "simulate", p, "--format", "json", "--seed", 12)[1]
    assert a != c


@pytest.mark.parametrize("fmt", ["json", "md", "csv"])
def test_report_deterministic(capsys, fmt, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "report", "--format", fmt, "-o", out1)[0] == EXIT_OK
    assert run(capsys, "report", "--format", fmt, "-o", out2)[0] == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_report_json_round_trip(capsys):
    _, out, _ = run(capsys, "report", "--format", "json")
    rep = Report.from_json(out)
    again = Report.from_json(rep.to_json())
    assert again.to_json() == out
    for a, b in zip(iter_numbers(rep), iter_numbers(again)):
        assert float(f"{a:.15g}") == float(f"{b:.15g}")


def test_report_contains_reproduction(capsys):
    _, out, _ = run(capsys, "report", "--format", "json")
    rep = Report.from_json(out)
    rows = {r["name"]: r for r in rep.section("memory_cross_sections").rows}
    assert rows["L1-D Tag"]["ci_low"] == pytest.approx(7.16e-17, rel=0.01)
    ratios = {r["comparison"]: r["value"] for r in rep.section("ratios [1 node, 40k ft]").rows}
    assert ratios["DPU C+H / DPU All"] == pytest.approx(22.5, rel=0.05)


def test_csv_format_sections(capsys):
    _, out, _ = run(capsys, "project", "--format", "csv")
    assert out.startswith("# memory_mttu\nsubject,")
    assert "# ratios" in out


def test_profiles_listing(capsys):
    code, out, _ = run(capsys, "profiles")
    assert code == EXIT_OK and "xczu9eg" in out.split()
