import json
import os
import subprocess
import sys

import pytest

from ipnsim.cli import main
from ipnsim.contactplan import read_plan
from ipnsim.scenario import BUILTINS, loads


def test_run_near_term_writes_outputs(tmp_path, capsys):
    out = tmp_path / "nt.jsonl"
    assert main(["run", "--scenario", "near_term", "--until", "90d", "--seed", "7", "--out", str(out),
                 "--trace", str(tmp_path / "trace.tsv")]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    summary = rows[-1]
    assert summary["type"] == "summary" and summary["seed"] == 7 and summary["horizon"] == 90 * 86400.0
    assert summary["delivered"] == summary["created"] > 0
    assert {"event", "bundle", "link", "node", "ltp"} <= {r["type"] for r in rows}
    csv = (tmp_path / "nt.csv").read_text().splitlines()
    assert csv[0] == "metric,value" and any(l.startswith("delivered,") for l in csv)
    assert len(read_plan(tmp_path / "nt.plan.txt").contacts) == summary["contacts"]
    assert (tmp_path / "trace.tsv").read_text().count("\n") == summary["events_executed"]
    assert "near_term: created" in capsys.readouterr().out


def test_plan_long_term_full_synodic_period(tmp_path):
    out = tmp_path / "lt.txt"
    assert main(["plan", "--scenario", "long_term", "--horizon", "780d", "--out", str(out)]) == 0
    plan = read_plan(out)
    assert plan.horizon == 780 * 86400.0 and len(plan.contacts) > 1000


def test_plan_to_stdout(capsys):
    assert main(["plan", "--scenario", "jupiter_relay", "--horizon", "1d"]) == 0
    assert capsys.readouterr().out.startswith("# ipnsim contact plan")


def test_scenarios_and_export(tmp_path, capsys):
    assert main(["scenarios"]) == 0
    listing = capsys.readouterr().out
    assert all(name in listing for name in BUILTINS)
    out = tmp_path / "jr.yaml"
    assert main(["export-scenario", "jupiter_relay", "--out", str(out)]) == 0
    assert loads(out.read_text()).name == "jupiter_relay"
    assert main(["run", "--config", str(out), "--until", "2h"]) == 0


def test_same_seed_gives_identical_bytes(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        assert main(["run", "--scenario", "jupiter_relay", "--seed", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_separate_processes_agree(tmp_path):
    outputs = []
    for hashseed in ("1", "2"):
        out = tmp_path / f"p{hashseed}.jsonl"
        env = dict(os.environ, PYTHONHASHSEED=hashseed)
        subprocess.run([sys.executable, "-m", "ipnsim.cli", "run", "--scenario", "jupiter_relay",
                        "--out", str(out)], check=True, env=env, capture_output=True)
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("argv", [
    [], ["run"], ["run", "--scenario", "nowhere"], ["run", "--scenario", "near_term", "--until", "soon"],
    ["run", "--scenario", "near_term", "--config", "x.yaml"], ["export-scenario"], ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: x\nhorizon: 1d\nbodies:\n  A: {kind: fixed-point}\nnodes:\n"
                   "  N: {body: Nowhere, role: orbiter}\n")
    assert main(["plan", "--config", str(bad)]) == 1
    assert "line 6:" in capsys.readouterr().err
    assert main(["plan", "--config", str(tmp_path / "missing.yaml")]) == 1
