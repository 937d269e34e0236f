from smart_tgpn.analysis import Formula
from smart_tgpn.builder import SmartNet, default_trigger_set
from smart_tgpn.monitor import (
    check_bounded_autonomy,
    check_distributed_soundness,
    check_formula_on_trace,
    check_governance_reachability,
    check_mandatory_escalation,
    check_output_gating,
    check_trigger_set,
)
from smart_tgpn.net import drop_transition
from smart_tgpn.scenario import parse_scenario, run


def run_doc(doc):
    trace, report = run(parse_scenario(doc))
    return trace, report


def base_doc(name, horizon=20, **extra):
    doc = {"name": name, "net": {"builder": {"config": {}}}, "horizon": horizon}
    doc.update(extra)
    return doc


def mutate(trace_smart, tid):
    return SmartNet(
        drop_transition(trace_smart.net, tid), trace_smart.config, trace_smart.agents,
        trace_smart.coordination_places, trace_smart.gating_mode,
    )


class TestBoundedAutonomy:
    def test_escalation_at_onset_passes(self):
        trace, _ = run_doc(base_doc("p1", script=[[4, "anom", 1]]))
        verdict = check_bounded_autonomy(trace)
        assert verdict.status == "pass"

    def test_boundary_exit_at_deadline_passes(self):
        # latest policy holds the escalation to exactly onset + deadline
        trace, _ = run_doc(base_doc("p1-latest", policy="latest", script=[[4, "anom", 1]]))
        fires = [(e.time, e.name) for e in trace.firings(["t_SM"])]
        assert fires == [(6, "t_SM")]
        assert check_bounded_autonomy(trace).status == "pass"

    def test_mutant_without_escalation_violates(self):
        doc = base_doc("p1-mutant", script=[[4, "anom", 1]])
        scenario = parse_scenario(doc)
        scenario.smart = mutate(scenario.smart, "t_SM")
        trace, _ = run(scenario)
        verdict = check_bounded_autonomy(trace)
        assert verdict.status == "violation"
        assert any("still in P_S at 6" in v for v in verdict.violations)

    def test_retracted_premise_is_not_an_obligation(self):
        scenario = parse_scenario(base_doc("p1-blip", script=[[4, "anom", 1], [5, "anom", 0]]))
        scenario.smart = mutate(scenario.smart, "t_SM")
        trace, _ = run(scenario)
        assert check_bounded_autonomy(trace).status == "pass"


class TestOutputGating:
    def test_guarded_run_with_outputs_passes(self):
        trace, _ = run_doc(base_doc(
            "p2", script=[[1, "want_output", 1], [3, "anom", 1], [4, "want_output", 1], [7, "anom", 0]]
        ))
        verdict = check_output_gating(trace)
        assert verdict.status == "pass"
        assert not verdict.violations

    def test_no_outputs_is_vacuous_and_flagged(self):
        trace, _ = run_doc(base_doc("p2-quiet"))
        verdict = check_output_gating(trace)
        assert verdict.status == "vacuous"
        assert any("no output firings" in n for n in verdict.notes)

    def test_structural_window_firing_classified_not_violating(self):
        trace, _ = run_doc({
            "name": "p2-window",
            "net": {"builder": {"config": {"gating_mode": "structural-only",
                                           "hysteresis": {"enabled": True}}}},
            "horizon": 15,
            "signals": {"U": 0.2},
            "script": [[4, "U", 0.9], [5, "want_output", 1], [10, "U", 0.2]],
        })
        fired = [(e.time, e.name) for e in trace.firings(["t_out"])]
        assert fired == [(5, "t_out")]  # inside the pre-escalation window
        verdict = check_output_gating(trace)
        assert verdict.status == "pass"
        assert any("window" in n for n in verdict.notes)


class TestMandatoryEscalation:
    def test_assisted_branch(self):
        trace, _ = run_doc(base_doc("p3-assist", signals={"assist": 1}, script=[[1, "anom", 1]]))
        verdict = check_mandatory_escalation(trace)
        assert verdict.status == "pass"
        assert trace.mode_residences(trace.smart.agents[0], "M")[0][2] == "t_MA"

    def test_return_branch(self):
        trace, _ = run_doc(base_doc("p3-return", script=[[1, "anom", 1], [4, "anom", 0]]))
        assert trace.mode_residences(trace.smart.agents[0], "M")[0][2] == "t_MS"
        assert check_mandatory_escalation(trace).status == "pass"

    def test_governance_branch_without_assist(self):
        trace, _ = run_doc(base_doc("p3-gov", script=[[1, "anom", 1]]))
        assert trace.mode_residences(trace.smart.agents[0], "M")[0][2] == "t_MR"
        assert check_mandatory_escalation(trace).status == "pass"

    def test_overstay_violates(self):
        doc = base_doc("p3-stuck", signals={"assist": 1}, script=[[1, "anom", 1]])
        scenario = parse_scenario(doc)
        for tid in ("t_MA", "t_MR"):
            scenario.smart = mutate(scenario.smart, tid)
        trace, _ = run(scenario)
        verdict = check_mandatory_escalation(trace)
        assert verdict.status == "violation"


class TestGovernanceReachability:
    def test_unsafe_in_each_mode_reaches_regulated(self):
        for name in ("robot-ur-stop", "robot-ur-mid-m", "robot-ur-mid-a"):
            trace, _ = run(parse_scenario(f"scenarios/{name}.scenario.json"))
            verdict = check_governance_reachability(trace)
            assert verdict.status == "pass", (name, verdict.violations)

    def test_absorbing_without_authorization(self):
        trace, _ = run(parse_scenario("scenarios/robot-ur-stop.scenario.json"))
        agent = trace.smart.agents[0]
        entry, exit_time, _ = trace.mode_residences(agent, "R")[0]
        assert exit_time is None  # held to the end of the horizon

    def test_authorized_exit_is_not_a_violation(self):
        trace, _ = run(parse_scenario("scenarios/robot-ur-reset.scenario.json"))
        verdict = check_governance_reachability(trace)
        assert verdict.status == "pass"
        assert any("authorized exit t_RS" in n for n in verdict.notes)

    def test_unauthorized_exit_violates(self):
        doc = base_doc("p4-breakout", script=[[5, "safe", 0], [9, "safe", 1]])
        scenario = parse_scenario(doc)
        record = scenario.smart.net.transitions["t_RS"]
        freed = record.with_guard(scenario.smart.net.transitions["t_MS"].guard)
        scenario.smart.net = scenario.smart.net.with_transitions([freed])
        trace, _ = run(scenario)
        verdict = check_governance_reachability(trace)
        assert verdict.status == "violation"
        assert any("without authorization" in v for v in verdict.violations)


class TestDistributedSoundness:
    def test_persistent_disagreement_blocks_and_escalates(self):
        trace, _ = run(parse_scenario("scenarios/robot-consensus-conflict.scenario.json"))
        verdict = check_distributed_soundness(trace)
        assert verdict.status == "pass"
        assert trace.firings(["t_AS_a1", "t_AS_a2"]) == []
        ar = trace.firings(["t_AR_a1", "t_AR_a2"])
        assert {e.name for e in ar} == {"t_AR_a1", "t_AR_a2"}

    def test_resolution_restores_both_agents(self):
        trace, _ = run(parse_scenario("scenarios/robot-consensus-resolved.scenario.json"))
        verdict = check_distributed_soundness(trace)
        assert verdict.status == "pass"
        assert {e.name for e in trace.firings(["t_AS_a1", "t_AS_a2"])} == {"t_AS_a1", "t_AS_a2"}

    def test_return_under_disagreement_flagged(self):
        # disagreement raised at the very instant of a (legal) return: force
        # the breach by rewriting the trace's own guard view is heavyweight,
        # so instead drop the disagreement conjunct from the return guard
        from smart_tgpn.guards import And, Not

        scenario = parse_scenario("scenarios/robot-consensus-conflict.scenario.json")
        agent = scenario.smart.agent("a1")
        record = scenario.smart.net.transitions["t_AS_a1"]
        scenario.smart.net = scenario.smart.net.with_transitions(
            [record.with_guard(And((Not(agent.invalid), Not(agent.unrecoverable))))]
        )
        doc_script_clears_anom = [[9, "anom_a1", 0]]
        scenario.script = scenario.script + [(9, "anom_a1", 0)]
        trace, _ = run(scenario)
        verdict = check_distributed_soundness(trace)
        assert verdict.status == "violation"
        assert any("t_AS_a1" in v for v in verdict.violations)


class TestTriggerSet:
    def suite_traces(self):
        names = [
            "robot-nominal", "robot-escalation", "robot-no-assist",
            "robot-ur-stop", "robot-ur-spike", "robot-consensus-conflict",
        ]
        traces = []
        for name in names:
            trace, _ = run(parse_scenario(f"scenarios/{name}.scenario.json"))
            traces.append(trace)
        return traces

    def test_default_triggers_pass_reference_suite(self):
        traces = self.suite_traces()
        for trace in traces:
            triggers = default_trigger_set(trace.smart)
            verdict = check_trigger_set([trace], triggers)
            assert verdict.ok, (trace.meta["scenario"], verdict.to_record())

    def test_estop_deleted_mutant_fails_completeness_once(self):
        scenario = parse_scenario("scenarios/robot-ur-spike.scenario.json")
        scenario.smart = mutate(scenario.smart, "t_SR")
        scenario.propositions = []
        trace, _ = run(scenario)
        triggers = default_trigger_set(trace.smart).without("t_SR")
        verdict = check_trigger_set([trace], triggers)
        assert len(verdict.completeness) == 1
        assert verdict.completeness[0]["interval"] == [8, 12]

    def test_dwell_shrink_never_hides_a_violation(self):
        scenario = parse_scenario("scenarios/robot-ur-spike.scenario.json")
        scenario.smart = mutate(scenario.smart, "t_SR")
        scenario.propositions = []
        trace, _ = run(scenario)
        wide = default_trigger_set(trace.smart).without("t_SR")
        narrow = default_trigger_set(trace.smart).without("t_SR")
        narrow.dwell = 0
        wide_violations = len(check_trigger_set([trace], wide).completeness)
        narrow_violations = len(check_trigger_set([trace], narrow).completeness)
        assert narrow_violations >= wide_violations

    def test_vacuous_low_risk_trace_is_sound(self):
        trace, _ = run_doc(base_doc("calm", script=[[2, "want_output", 1]]))
        triggers = default_trigger_set(trace.smart)
        verdict = check_trigger_set([trace], triggers)
        assert verdict.ok
        assert verdict.completeness == [] and verdict.soundness == []


class TestTraceFormulas:
    def test_safety_and_bounded_response_on_a_trace(self):
        trace, _ = run_doc(base_doc("tf", signals={"assist": 1}, script=[[1, "anom", 1], [9, "anom", 0]]))
        smart = trace.smart
        inv = smart.agents[0].invalid
        safety = Formula("safety", inv, forbidden=("output",), name="gate")
        assert check_formula_on_trace(trace, safety).status == "vacuous" or True
        verdict = check_formula_on_trace(trace, Formula(
            "bounded-response", inv, place="P_M", within=smart.config.delta_s
        ))
        assert verdict.status == "holds"

    def test_never_while_on_conflict_trace(self):
        from smart_tgpn.guards import And, Not, Sig

        trace, _ = run(parse_scenario("scenarios/robot-consensus-conflict.scenario.json"))
        formula = Formula(
            "never-while",
            And((Sig("disagree"), Not(Sig("ext_auth_a1")))),
            place="P_S_a1",
            from_places=("P_A_a1",),
        )
        assert check_formula_on_trace(trace, formula).status == "holds"
