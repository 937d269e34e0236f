import pytest

from smart_tgpn.builder import SmartConfig, build_macro_only, build_single_agent
from smart_tgpn.guards import TRUE, parse_guard
from smart_tgpn.hierarchy import InterfaceSpec, RefinementError, Subnet, check_interface, refine
from smart_tgpn.net import Arc, Net, TransitionRecord, validate_net


def coordination_smart():
    return build_single_agent(SmartConfig())


class TestCheckInterface:
    def test_builder_subnet_passes_all_hypotheses(self):
        smart = coordination_smart()
        sub, iface = smart.coordination_subnet()
        report = check_interface(smart.net, sub, iface)
        assert report.h1.passed, report.summary()
        assert report.h2.passed, report.summary()
        assert report.h3.passed, report.summary()

    def test_double_exit_token_fails_h1(self):
        smart = coordination_smart()
        sub, iface = smart.coordination_subnet()
        # consensus step duplicates its token into the exit place
        doubled = [
            Arc(a.source, a.target, 2 if a.source == "t_agree" else a.weight)
            for a in sub.net.arcs
        ]
        sub = Subnet(
            Net(sub.net.places, dict(sub.net.transitions), doubled),
            sub.entry, sub.exit, sub.success_exit,
        )
        report = check_interface(None, sub, InterfaceSpec(None, None))
        assert not report.h1.passed
        assert any("t_agree" in w for w in report.h1.witnesses)

    def test_encapsulation_breach_fails_h2(self):
        smart = coordination_smart()
        sub, iface = smart.coordination_subnet()
        # a subnet step writes straight into a macro mode place
        breached = Net(
            smart.net.places,
            dict(smart.net.transitions),
            list(smart.net.arcs) + [Arc("t_verify", "P_R")],
            dict(smart.net.initial_marking),
        )
        report = check_interface(breached, sub, iface)
        assert not report.h2.passed
        assert any("t_verify" in w for w in report.h2.witnesses)

    def test_nondeterministic_exit_fails_h3(self):
        smart = coordination_smart()
        sub, iface = smart.coordination_subnet()
        weak_exit = smart.net.transitions["t_AS"]
        weakened = smart.net.with_transitions(
            [TransitionRecord("t_AS", weak_exit.guard, 0, float("inf"), "weak",
                              weak_exit.role, weak_exit.priority)]
        )
        report = check_interface(weakened, sub, iface)
        assert not report.h3.passed


def coordination_subnet_for_refine():
    """Standalone consensus fragment with its own exit transition."""
    places = ["P_entry", "P_claim", "P_check", "P_agree", "P_conflict"]
    transitions = {
        "t_propose": TransitionRecord("t_propose", TRUE, 0, 1),
        "t_verify": TransitionRecord("t_verify", TRUE, 0, 1),
        "t_agree": TransitionRecord("t_agree", parse_guard("not disagree"), 0, 1),
        "t_conflict": TransitionRecord("t_conflict", parse_guard("disagree"), 0, 1),
        "t_resolve": TransitionRecord("t_resolve", parse_guard("not disagree"), 0, 1),
        "t_Aexit": TransitionRecord("t_Aexit", TRUE, 0, 1, "strong"),
    }
    arcs = [
        Arc("P_entry", "t_propose"), Arc("t_propose", "P_claim"),
        Arc("P_claim", "t_verify"), Arc("t_verify", "P_check"),
        Arc("P_check", "t_agree"), Arc("t_agree", "P_agree"),
        Arc("P_check", "t_conflict"), Arc("t_conflict", "P_conflict"),
        Arc("P_conflict", "t_resolve"), Arc("t_resolve", "P_claim"),
    ]
    return Subnet(Net(places, transitions, arcs), ["P_entry"], ["P_agree"], ["P_agree"])


class TestRefine:
    def test_replaces_place_and_preserves_macro_exits(self):
        macro = build_macro_only(SmartConfig())
        sub = coordination_subnet_for_refine()
        flat = refine(macro.net, "P_A", sub, InterfaceSpec(out_transition="t_Aexit"))
        assert "P_A" not in flat.places
        assert {"t_AS", "t_AR"} <= set(flat.transitions)
        assert {"P_claim", "P_check", "P_agree", "P_conflict"} <= set(flat.places)
        # entry rerouted: the assisted-escalation switch now feeds the subnet
        assert "P_entry" in flat.post("t_MA")
        # exits rerouted through the out-interface vestibule
        assert "P_A.out" in flat.pre("t_AS")
        assert "P_A.out" in flat.post("t_Aexit")
        assert validate_net(flat).ok

    def test_identity_refinement_isomorphic_modulo_renaming(self):
        macro = build_macro_only(SmartConfig())
        sub = Subnet(Net(["P_inner"], {}, []), ["P_inner"], ["P_inner"], ["P_inner"])
        flat = refine(macro.net, "P_A", sub, InterfaceSpec())
        assert sorted(flat.transitions) == sorted(macro.net.transitions)
        relabel = lambda p: "P_inner" if p == "P_A" else p
        assert sorted(flat.places) == sorted(relabel(p) for p in macro.net.places)
        for tid in macro.net.transition_ids():
            assert flat.pre(tid) == {relabel(p): w for p, w in macro.net.pre(tid).items()}
            assert flat.post(tid) == {relabel(p): w for p, w in macro.net.post(tid).items()}

    def test_non_refinable_place_rejected(self):
        macro = build_macro_only(SmartConfig())
        sub = coordination_subnet_for_refine()
        with pytest.raises(RefinementError):
            refine(macro.net, "P_S", sub, InterfaceSpec())

    def test_colliding_ids_are_qualified(self):
        macro = build_macro_only(SmartConfig())
        sub = Subnet(
            Net(["P_S"], {}, []),  # collides with the macro stable place
            ["P_S"], ["P_S"], ["P_S"],
        )
        flat = refine(macro.net, "P_A", sub, InterfaceSpec())
        assert "P_A.P_S" in flat.places
        assert flat.places.count("P_S") == 1

    def test_refining_twice_never_collides(self):
        macro = build_macro_only(SmartConfig())
        macro.net.refinable.add("P_M")
        sub = coordination_subnet_for_refine()
        once = refine(macro.net, "P_A", sub, InterfaceSpec(out_transition="t_Aexit"))
        sub2 = Subnet(Net(["P_claim"], {}, []), ["P_claim"], ["P_claim"], ["P_claim"])
        twice = refine(once, "P_M", sub2, InterfaceSpec())
        assert len(set(twice.places)) == len(twice.places)
        assert "P_M.P_claim" in twice.places


class TestMacroPreservation:
    def test_projected_builder_trace_is_a_legal_macro_trace(self):
        """Runs of the subnet-attached net, projected onto the mode places,
        replay as legal runs of the opaque macro net."""
        from smart_tgpn.scenario import parse_scenario, run

        doc = {
            "name": "projection",
            "net": {"builder": {"config": {}}},
            "horizon": 30,
            "signals": {"assist": 1, "agree": 1},
            "script": [[1, "anom", 1], [9, "anom", 0]],
        }
        trace, _ = run(parse_scenario(doc))
        agent = trace.smart.agents[0]
        projected = [
            (e.time, e.name) for e in trace.firings(agent.mode_switches.values())
        ]
        assert projected == [(1, "t_SM"), (6, "t_MA"), (9, "t_AS")]

        # the same mode-switch sequence is fireable on the macro-only net
        macro = build_macro_only(SmartConfig())
        from smart_tgpn.kernel import KernelState, fire
        from smart_tgpn.signals import SignalState

        sigma = SignalState.declare(
            booleans=macro.bool_signals(), reals=macro.real_signals(),
            initial=macro.default_initial_signals(),
        )
        sigma.record("assist", True, 0)
        sigma.record("agree", True, 0)
        sigma.record("anom", True, 1)
        sigma.record("timeout_M", True, 6)
        sigma.record("anom", False, 9)
        state = KernelState.initial(macro.net)
        for time, tid in projected:
            state.now = time
            state, _ = fire(macro.net, state, tid, sigma)
        assert state.marking["P_S"] == 1


def test_interface_places_must_exist_in_subnet():
    with pytest.raises(RefinementError):
        Subnet(Net(["P_a"], {}, []), entry=["P_missing"], exit=["P_a"], success_exit=["P_a"])


def test_interface_transition_must_exist():
    macro = build_macro_only(SmartConfig())
    sub = Subnet(Net(["P_x"], {}, []), ["P_x"], ["P_x"], ["P_x"])
    with pytest.raises(RefinementError):
        refine(macro.net, "P_A", sub, InterfaceSpec(in_transition="t_ghost"))
