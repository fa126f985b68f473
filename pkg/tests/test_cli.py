import json
import os
import subprocess
import sys

import pytest

from eclab.cli import main
from eclab.scenario import bundled_names


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_stable_leader_exit_zero(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run(capsys, "run", "--scenario", "stable-leader", "--stack", "etob-direct",
                       "--report-out", str(report))
    assert code == 0
    data = json.loads(report.read_text())
    etob = next(v for v in data["verdicts"] if v["name"] == "etob")
    assert etob["status"] == "satisfied" and etob["witness"] == 0
    assert data["latency"]["max_hops"] == 2
    assert "etob: satisfied witness=0" in out


def test_flaky_leader_reports_positive_tau(capsys, tmp_path):
    report = tmp_path / "r.json"
    code, _, _ = run(capsys, "run", "--scenario", "flaky-leader", "--stack", "etob-direct",
                     "--check", "etob", "--report-out", str(report))
    data = json.loads(report.read_text())
    assert code == 0 and data["verdicts"][0]["witness"] > 0


def test_missing_scenario_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "run", "--scenario", str(tmp_path / "nope.toml"), "--stack", "etob-direct")
    assert code == 64 and "no scenario" in err


def test_bad_flags_are_usage_errors(capsys):
    assert run(capsys, "run", "--scenario", "stable-leader", "--stack", "bogus")[0] == 64
    assert run(capsys, "run", "--scenario", "stable-leader", "--stack", "ec-omega", "--check", "etob")[0] == 64
    assert run(capsys)[0] == 64


def test_violation_exits_one(capsys, tmp_path):
    # instances finish before the oracle settles, so agreement never holds
    path = tmp_path / "early.toml"
    path.write_text("n = 3\nhorizon = 80\n[omega]\ntau = 40\nprestable = \"self\"\n"
                    "[workload]\ninstances = 3\n")
    code, out, _ = run(capsys, "run", "--scenario", str(path), "--stack", "ec-omega")
    assert code == 1 and "agreement: violated" in out


def test_inconclusive_exits_two(capsys):
    # the horizon ends right after the last broadcasts, before they can settle
    code, out, _ = run(capsys, "run", "--scenario", "flaky-leader", "--stack", "etob-direct",
                       "--horizon", "51", "--check", "etob")
    assert code == 2 and "inconclusive" in out


def test_trace_and_report_are_byte_identical(capsys, tmp_path):
    outs = []
    for i in range(2):
        trace, report = tmp_path / f"t{i}.trace", tmp_path / f"r{i}.json"
        run(capsys, "run", "--scenario", "crash-leader-mid-run", "--stack", "ec-to-etob",
            "--trace-out", str(trace), "--report-out", str(report))
        outs.append((trace.read_bytes(), report.read_bytes()))
    assert outs[0] == outs[1]


def test_cli_bytes_stable_across_interpreters(tmp_path):
    env = dict(os.environ)
    files = []
    for i, hs in enumerate(("0", "777")):
        env["PYTHONHASHSEED"] = hs
        trace, report = tmp_path / f"t{i}", tmp_path / f"r{i}"
        subprocess.run([sys.executable, "-m", "eclab", "run", "--scenario", "eic-revisions",
                        "--stack", "eic-roundtrip", "--trace-out", str(trace), "--report-out", str(report)],
                       env=env, check=True, capture_output=True)
        files.append((trace.read_bytes(), report.read_bytes()))
    assert files[0] == files[1]


def test_several_scenarios_with_jobs(capsys, tmp_path):
    code, out, _ = run(capsys, "run", "--scenario", "stable-leader", "--scenario", "minority-correct",
                       "--stack", "etob-direct", "--jobs", "2", "--report-out", str(tmp_path))
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert len(names) == 2 and names[0].startswith("minority-correct-etob-direct-")


def test_scenarios_listing(capsys):
    code, out, _ = run(capsys, "scenarios")
    assert code == 0 and out.split() == bundled_names()


def test_chtlab_finds_bivalent(capsys, tmp_path):
    edges = tmp_path / "g.txt"
    code, out, _ = run(capsys, "chtlab", "--n", "2", "--depth", "4", "--max-k", "1",
                       "--dump-edges", str(edges))
    assert code == 0
    assert "bivalent: k=1" in out
    # past the input choices, a vertex whose schedule already fixed both proposals
    assert "settled-bivalent k=1: count=" in out and "first=(p" in out
    assert "dag-properties:" in out and "tags k=1:" in out
    assert edges.read_text().strip()


def test_chtlab_depth_zero(capsys):
    code, out, _ = run(capsys, "chtlab", "--depth", "0")
    assert code == 0 and "bivalent: none within bounds" in out


@pytest.mark.parametrize("budget,expected", [("1000000000000", 64), ("0", 64), ("100", 65)])
def test_chtlab_budgets(capsys, budget, expected):
    code, _, err = run(capsys, "chtlab", "--n", "3", "--depth", "5", "--max-vertices", budget)
    assert code == expected and err


def test_chtlab_constant_leader_report(capsys, tmp_path):
    report = tmp_path / "c.json"
    code, out, _ = run(capsys, "chtlab", "--omega", "constant", "--depth", "5", "--report-out", str(report))
    data = json.loads(report.read_text())
    assert code == 0 and data["tree"]["settled_bivalent"]["1"]["count"] == 0


def test_chtlab_single_process(capsys):
    code, out, _ = run(capsys, "chtlab", "--n", "1", "--depth", "3")
    assert code == 0 and "owner=p1" in out
