import json

import pytest

from smart_tgpn.builder import SmartConfig, build_single_agent
from smart_tgpn.cli import main
from smart_tgpn.netio import load_smart, save_net, save_smart
from smart_tgpn.net import Arc, Net, TransitionRecord


@pytest.fixture()
def smart_net_file(tmp_path):
    path = tmp_path / "smart.net.json"
    save_smart(build_single_agent(SmartConfig()), str(path))
    return str(path)


def test_validate_ok(smart_net_file, capsys):
    assert main(["validate", smart_net_file]) == 0
    out = capsys.readouterr().out
    assert "errors: 0" in out


def test_validate_dangling_arc_is_input_error(tmp_path, capsys):
    net = Net(places=["p"], transitions={"t": TransitionRecord("t")}, arcs=[Arc("t", "ghost")])
    path = tmp_path / "bad.net.json"
    save_net(net, str(path))
    assert main(["validate", str(path)]) == 3
    assert "dangling arc" in capsys.readouterr().out


def test_net_file_round_trip(smart_net_file):
    smart = load_smart(smart_net_file)
    rebuilt = build_single_agent(SmartConfig())
    assert set(smart.net.transitions) == set(rebuilt.net.transitions)
    for tid in rebuilt.net.transitions:
        assert smart.net.transitions[tid].guard == rebuilt.net.transitions[tid].guard
        assert smart.net.transitions[tid].interval == rebuilt.net.transitions[tid].interval
    assert smart.net.initial_marking == rebuilt.net.initial_marking


def test_simulate_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "runs"
    code = main(["simulate", "scenarios/robot-nominal.scenario.json", "--out", str(out)])
    assert code == 0
    assert (out / "robot-nominal.trace.jsonl").exists()
    report = json.loads((out / "robot-nominal.report.json").read_text())
    assert report["status"] == "pass"
    assert (out / "robot-nominal.report.txt").exists()


def test_simulate_seed_determinism(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "scenarios/robot-nominal.scenario.json", "--seed", "5", "--out", str(out_a)])
    main(["simulate", "scenarios/robot-nominal.scenario.json", "--seed", "5", "--out", str(out_b)])
    trace_a = (out_a / "robot-nominal.trace.jsonl").read_bytes()
    trace_b = (out_b / "robot-nominal.trace.jsonl").read_bytes()
    assert trace_a == trace_b


def test_verify_on_stored_trace(tmp_path, capsys):
    out = tmp_path / "runs"
    main(["simulate", "scenarios/robot-escalation.scenario.json", "--out", str(out)])
    capsys.readouterr()
    code = main([
        "verify", "scenarios/robot-escalation.scenario.json",
        "--trace", str(out / "robot-escalation.trace.jsonl"),
    ])
    assert code == 0
    assert "P1 bounded autonomy" in capsys.readouterr().out


def test_verify_mutant_scenario_reports_violation(tmp_path, capsys):
    # a net file with the escalation transition removed: the stored-net
    # scenario must fail the bounded-autonomy monitor
    from smart_tgpn.net import drop_transition
    from smart_tgpn.builder import SmartNet

    smart = build_single_agent(SmartConfig())
    mutant = SmartNet(drop_transition(smart.net, "t_SM"), smart.config, smart.agents,
                      smart.coordination_places, smart.gating_mode)
    net_path = tmp_path / "mutant.net.json"
    save_smart(mutant, str(net_path))
    scenario = {
        "name": "mutant-run",
        "net": {"file": str(net_path)},
        "horizon": 12,
        "script": [[2, "anom", 1]],
        "propositions": ["P1"],
    }
    scenario_path = tmp_path / "mutant.scenario.json"
    scenario_path.write_text(json.dumps(scenario))
    code = main(["verify", str(scenario_path)])
    assert code == 1
    assert "violation" in capsys.readouterr().out


def test_explore_subcommand(tmp_path, capsys):
    scenario = {
        "name": "explore-me",
        "net": {"builder": {"config": {}}},
        "horizon": 10,
        "formulas": [
            {"kind": "safety", "condition": "invalid", "forbidden": ["output"], "name": "gating"},
        ],
        "exploration": {"horizon": 6, "alphabet": ["anom", "evidence", "safe", "hardware_fault", "want_output"]},
    }
    path = tmp_path / "x.scenario.json"
    path.write_text(json.dumps(scenario))
    export = tmp_path / "graph.txt"
    code = main(["explore", str(path), "--export", str(export)])
    out = capsys.readouterr().out
    assert code == 0
    assert "gating" in out and "holds" in out
    lines = export.read_text().splitlines()
    assert any(line.startswith("state ") for line in lines)
    assert any(line.startswith("edge ") for line in lines)


def test_report_subcommand(tmp_path, capsys):
    out = tmp_path / "runs"
    main(["simulate", "scenarios/robot-no-assist.scenario.json", "--out", str(out)])
    capsys.readouterr()
    code = main([
        "report", str(out / "robot-no-assist.trace.jsonl"),
        "--scenario", "scenarios/robot-no-assist.scenario.json",
    ])
    assert code == 0
    stats = capsys.readouterr().out
    assert '"governance_entries": 1' in stats


def test_unknown_subcommand_is_input_error(capsys):
    assert main(["frobnicate"]) == 3
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_file_is_input_error(capsys):
    assert main(["simulate", "no-such.scenario.json"]) == 3


def test_bad_flag_is_input_error(capsys):
    assert main(["simulate", "scenarios/robot-nominal.scenario.json", "--bogus"]) == 3


def test_multi_agent_net_file_round_trip(tmp_path):
    from smart_tgpn.builder import AgentSpec, build_multi_agent
    from smart_tgpn.netio import save_smart

    smart = build_multi_agent([AgentSpec("a1"), AgentSpec("a2")])
    path = tmp_path / "multi.net.json"
    save_smart(smart, str(path))
    loaded = load_smart(str(path))
    assert [a.agent_id for a in loaded.agents] == ["a1", "a2"]
    assert set(loaded.net.transitions) == set(smart.net.transitions)
    assert loaded.agent("a2").mode_places["A"] == "P_A_a2"
