"""Trace monitors for the SMART behavioral guarantees.

Each monitor scans a completed trace and returns a verdict that is a
violation, a pass, a vacuous pass (the premise was never exercised), or
inconclusive (the horizon ended inside an open obligation). Signals are
piecewise constant, so "persistently" means: at every instant of the
checked interval.

The checks, by name:

- bounded autonomy: residence in the stable place under persistent
  epistemic invalidity (and no unsafety) never exceeds the escalation
  deadline.
- output gating: no externally visible firing at an instant of
  invalidity (guarded builds); under purely structural gating, invalid
  outputs are confined to the window before the forced exit from the
  stable place, and never occur once the mode token has left it.
- mandatory escalation: every local-recovery residence ends within the
  recovery budget plus the worst escalation deadline, through exactly one
  legal exit whose choice matches the assist / unsafety signals.
- governance reachability: persistent unsafety puts the mode token in
  the regulated place within the governance bound, and the regulated
  place is absorbing while authorization is absent.
- distributed soundness: a disagreeing agent never returns to stable
  autonomy; persistent disagreement forces its governance exit within
  the consensus budget plus deadline; resolved disagreement permits (and
  with strong timing produces) the legitimate return.
- trigger sufficiency: completeness (risky intervals activate some
  trigger), soundness (no governance trigger outside risk, returns not
  blocked in low-risk recovery), and non-Zeno escalation (no unbounded
  stable/recovery thrash under persistent risk), plus the safety-envelope
  view (stable mode does not coexist with matured risk).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .builder import SmartNet, TriggerSet
from .guards import And, GuardExpr, Not
from .trace import Trace

PASS = "pass"
VIOLATION = "violation"
VACUOUS = "vacuous"
INCONCLUSIVE = "inconclusive"

_RANK = {VACUOUS: 0, PASS: 1, INCONCLUSIVE: 2, VIOLATION: 3}


@dataclass
class Verdict:
    name: str
    status: str
    violations: list[str] = field(default_factory=list)
    witnesses: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in (PASS, VACUOUS)

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "violations": self.violations,
            "witnesses": self.witnesses,
            "notes": self.notes,
        }


def _merge(status: str, new: str) -> str:
    return new if _RANK[new] > _RANK[status] else status


def _require_smart(trace: Trace) -> SmartNet:
    if trace.smart is None:
        raise ValueError("trace is not bound to a SMART net (rebuild via its scenario)")
    return trace.smart


@dataclass(frozen=True)
class PropositionSpec:
    """Which proposition to check, with its bound parameters taken from
    the net's configuration unless overridden."""

    prop: str  # "P1".."P5"
    params: dict | None = None

    def run(self, trace: Trace) -> Verdict:
        checker = {
            "P1": check_bounded_autonomy,
            "P2": check_output_gating,
            "P3": check_mandatory_escalation,
            "P4": check_governance_reachability,
            "P5": check_distributed_soundness,
        }[self.prop]
        return checker(trace, **(self.params or {}))


# --- P1 ------------------------------------------------------------------


def check_bounded_autonomy(trace: Trace, delta_s: int | None = None) -> Verdict:
    """Stable-mode residence under persistent (invalid and not UR) must
    end within the escalation deadline of the condition's onset."""
    smart = _require_smart(trace)
    verdict = Verdict("P1 bounded autonomy", VACUOUS)
    for agent in smart.agents:
        bound = delta_s if delta_s is not None else agent.config.delta_s
        condition = And((agent.invalid, Not(agent.unrecoverable)))
        for start, end, truncated in trace.predicate_intervals(condition):
            if trace.mode_before(agent, start) != "S":
                continue
            verdict.status = _merge(verdict.status, PASS)
            exits = [
                t for t, mode in trace.mode_timeline(agent)
                if start <= t <= start + bound and mode != "S"
            ]
            left_at = exits[0] if exits else None
            if left_at is not None:
                continue
            if end <= start + bound and not truncated:
                continue  # the premise was retracted before the deadline
            if truncated and trace.horizon < start + bound:
                verdict.status = _merge(verdict.status, INCONCLUSIVE)
                verdict.notes.append(f"interval at {start} ends with the horizon inside the deadline")
                continue
            verdict.status = _merge(verdict.status, VIOLATION)
            verdict.violations.append(
                f"agent {agent.agent_id or 'default'}: still in P_S at {start + bound} "
                f"after persistent invalidity from {start}"
            )
            verdict.witnesses.append({"interval": [start, end], "deadline": start + bound})
    return verdict


# --- P2 ------------------------------------------------------------------


def check_output_gating(trace: Trace) -> Verdict:
    """Guarded builds: no output firing at an instant with invalid true.
    All builds: no output firing without the stable token (checked from
    the firing's own pre-marking). Structural-only builds additionally
    classify invalid-instant outputs into the pre-escalation window."""
    smart = _require_smart(trace)
    verdict = Verdict("P2 output gating", VACUOUS)
    guarded = smart.gating_mode == "structural+guarded"
    for agent in smart.agents:
        outputs = trace.firings(agent.outputs)
        if outputs:
            verdict.status = _merge(verdict.status, PASS)
        for event in outputs:
            before = trace.marking_before(event)
            if before.get(agent.place("S"), 0) < 1:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"{event.name} fired at {event.time} without the stable token"
                )
                continue
            if trace.eval_at(agent.invalid, event.time):
                if guarded:
                    verdict.status = _merge(verdict.status, VIOLATION)
                    verdict.violations.append(
                        f"{event.name} fired at {event.time} while invalid"
                    )
                else:
                    window_ok = _within_pre_escalation_window(trace, agent, event.time)
                    if window_ok:
                        verdict.notes.append(
                            f"{event.name} fired at {event.time} inside the bounded "
                            f"pre-escalation window (structural gating)"
                        )
                    else:
                        verdict.status = _merge(verdict.status, VIOLATION)
                        verdict.violations.append(
                            f"{event.name} fired at {event.time} under invalidity "
                            f"outside the bounded window"
                        )
    if verdict.status == VACUOUS:
        verdict.notes.append("no output firings in this trace")
    return verdict


def _within_pre_escalation_window(trace: Trace, agent, time: int) -> bool:
    """True when the instant lies between invalidity onset and the forced
    exit from the stable place, and that exit honored its deadline. With
    debounced escalation the window extends by the escalate debounce."""
    debounce = agent.config.hysteresis.debounce_up if agent.config.hysteresis.enabled else 0
    window = agent.config.delta_s + debounce
    condition = And((agent.invalid, Not(agent.unrecoverable)))
    for start, end, _ in trace.predicate_intervals(condition):
        if start <= time < end:
            return time - start <= window
    # invalid with UR alongside: the stable exit is the governance one
    for start, end, _ in trace.predicate_intervals(agent.invalid):
        if start <= time < end:
            return time - start <= max(window, agent.config.delta_sr)
    return False


# --- P3 ------------------------------------------------------------------


def check_mandatory_escalation(
    trace: Trace,
    budget_m: int | None = None,
    delta_m: int | None = None,
    delta_mr: int | None = None,
) -> Verdict:
    """Every local-recovery residence ends, within budget plus deadline,
    via exactly one of the return / assisted / governance exits, and the
    exit choice matches the assist and unsafety signals at that instant."""
    smart = _require_smart(trace)
    verdict = Verdict("P3 mandatory escalation", VACUOUS)
    for agent in smart.agents:
        b_m = budget_m if budget_m is not None else agent.config.budget_m
        d_m = delta_m if delta_m is not None else agent.config.delta_m
        d_mr = delta_mr if delta_mr is not None else agent.config.delta_mr
        bound = b_m + max(d_m, d_mr)
        legal = {agent.switch("t_MS"), agent.switch("t_MA"), agent.switch("t_MR")}
        for entry, exit_time, exit_tid in trace.mode_residences(agent, "M"):
            verdict.status = _merge(verdict.status, PASS)
            if exit_time is None:
                if trace.horizon - entry <= bound:
                    verdict.status = _merge(verdict.status, INCONCLUSIVE)
                    verdict.notes.append(f"residence from {entry} still open at the horizon")
                else:
                    verdict.status = _merge(verdict.status, VIOLATION)
                    verdict.violations.append(
                        f"residence from {entry} exceeded {bound} ticks with no exit"
                    )
                continue
            if exit_time - entry > bound:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"residence [{entry}, {exit_time}] exceeded {bound} ticks"
                )
            if exit_tid not in legal:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"residence [{entry}, {exit_time}] left via {exit_tid}, not a legal M exit"
                )
                continue
            assist = bool(trace.sigma.value_at(agent.signal("assist"), exit_time))
            unsafe = trace.eval_at(agent.unrecoverable, exit_time)
            if exit_tid == agent.switch("t_MA") and not (assist and not unsafe):
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"t_MA at {exit_time} but assist={assist}, UR={unsafe}"
                )
            if exit_tid == agent.switch("t_MR") and not (unsafe or not assist):
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"t_MR at {exit_time} but assist={assist}, UR={unsafe}"
                )
    return verdict


# --- P4 ------------------------------------------------------------------


def check_governance_reachability(trace: Trace, delta_gov: int | None = None) -> Verdict:
    """Persistent unsafety reaches the regulated place within the
    governance bound; while authorization is absent, nothing leaves it."""
    smart = _require_smart(trace)
    verdict = Verdict("P4 governance reachability", VACUOUS)
    for agent in smart.agents:
        bound = delta_gov if delta_gov is not None else agent.config.governance_bound
        for start, end, truncated in trace.predicate_intervals(agent.unrecoverable):
            verdict.status = _merge(verdict.status, PASS)
            reached = [
                t for t, mode in trace.mode_timeline(agent)
                if mode == "R" and start <= t <= start + bound
            ]
            if trace.mode_before(agent, start) == "R" or reached:
                pass
            elif end <= start + bound and not truncated:
                pass  # unsafety retracted before the bound matured
            elif truncated and trace.horizon < start + bound:
                verdict.status = _merge(verdict.status, INCONCLUSIVE)
                verdict.notes.append(f"unsafety from {start} still maturing at the horizon")
            else:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"agent {agent.agent_id or 'default'}: P_R not reached by {start + bound} "
                    f"for unsafety from {start}"
                )

        # absorption: no exit firing while in R with authorization absent
        for entry, exit_time, exit_tid in trace.mode_residences(agent, "R"):
            if exit_time is None:
                continue
            auth = bool(trace.sigma.value_at(agent.signal("ext_auth"), exit_time))
            unsafe = trace.eval_at(agent.unrecoverable, exit_time)
            if not auth:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(
                    f"{exit_tid} left P_R at {exit_time} without authorization"
                )
            elif unsafe:
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(f"{exit_tid} left P_R at {exit_time} while unsafe")
            else:
                verdict.notes.append(f"authorized exit {exit_tid} at {exit_time}")
    return verdict


# --- P5 ------------------------------------------------------------------


def check_distributed_soundness(trace: Trace, agents: list[str] | None = None) -> Verdict:
    """Per agent: no stable return at a disagreeing instant; disagreement
    through the consensus budget forces the governance exit; a resolved
    disagreement (with validity and safety) yields the legitimate return
    within its deadline."""
    smart = _require_smart(trace)
    verdict = Verdict("P5 distributed soundness", VACUOUS)
    views = [a for a in smart.agents if agents is None or a.agent_id in agents]
    disagree = trace.sigma
    for agent in views:
        t_as, t_ar = agent.switch("t_AS"), agent.switch("t_AR")
        for event in trace.firings([t_as]):
            verdict.status = _merge(verdict.status, PASS)
            if bool(disagree.value_at("disagree", event.time)):
                verdict.status = _merge(verdict.status, VIOLATION)
                verdict.violations.append(f"{t_as} fired at {event.time} under disagreement")

        bound = agent.config.budget_a + agent.config.delta_ar
        for entry, exit_time, exit_tid in trace.mode_residences(agent, "A"):
            verdict.status = _merge(verdict.status, PASS)
            span_end = exit_time if exit_time is not None else trace.horizon
            disagree_throughout = all(
                bool(disagree.value_at("disagree", t))
                for t in _instants(trace, entry, min(span_end, entry + bound))
            )
            if disagree_throughout:
                if exit_time is None:
                    if trace.horizon - entry <= bound:
                        verdict.status = _merge(verdict.status, INCONCLUSIVE)
                        verdict.notes.append(f"disagreeing residence from {entry} open at horizon")
                    else:
                        verdict.status = _merge(verdict.status, VIOLATION)
                        verdict.violations.append(
                            f"agent {agent.agent_id or 'default'}: disagreement from {entry} "
                            f"never escalated within {bound}"
                        )
                elif exit_time - entry > bound or exit_tid != t_ar:
                    verdict.status = _merge(verdict.status, VIOLATION)
                    verdict.violations.append(
                        f"agent {agent.agent_id or 'default'}: residence [{entry}, {exit_time}] "
                        f"exited via {exit_tid} at +{exit_time - entry} (bound {bound} via {t_ar})"
                    )
            else:
                resolved = _resolution_instant(trace, agent, entry, span_end)
                if resolved is None:
                    continue
                deadline = resolved + agent.config.delta_a
                returned = any(e.time <= deadline for e in trace.firings([t_as]) if e.time >= resolved)
                still_resolved = all(
                    _return_permitted(trace, agent, t)
                    for t in _instants(trace, resolved, min(deadline, span_end))
                )
                if returned:
                    continue
                if not still_resolved:
                    continue  # conditions lapsed again; no obligation matured
                if trace.horizon < deadline:
                    verdict.status = _merge(verdict.status, INCONCLUSIVE)
                    verdict.notes.append(f"resolution at {resolved} still maturing at horizon")
                elif exit_time is None or exit_time > deadline:
                    verdict.status = _merge(verdict.status, VIOLATION)
                    verdict.violations.append(
                        f"agent {agent.agent_id or 'default'}: resolution at {resolved} "
                        f"did not produce {t_as} by {deadline}"
                    )
    return verdict


def _instants(trace: Trace, start: int, end: int) -> list[int]:
    if start > end:
        return []
    points = [t for t in trace.change_points() if start <= t <= end]
    if start not in points:
        points.insert(0, start)
    return points


def _resolution_instant(trace: Trace, agent, start: int, end: int) -> int | None:
    for t in _instants(trace, start, end):
        if _return_permitted(trace, agent, t):
            return t
    return None


def _return_permitted(trace: Trace, agent, time: int) -> bool:
    sigma = trace.sigma
    return (
        not bool(sigma.value_at("disagree", time))
        and bool(sigma.value_at("agree", time))
        and not trace.eval_at(agent.invalid, time)
        and not trace.eval_at(agent.unrecoverable, time)
    )


# --- trigger sufficiency ---------------------------------------------------


@dataclass
class TriggerVerdict:
    completeness: list[dict] = field(default_factory=list)
    soundness: list[dict] = field(default_factory=list)
    non_zeno: list[dict] = field(default_factory=list)
    envelope: list[dict] = field(default_factory=list)
    inconclusive: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.completeness or self.soundness or self.non_zeno or self.envelope)

    def to_record(self) -> dict:
        return {
            "completeness_violations": self.completeness,
            "soundness_violations": self.soundness,
            "non_zeno_violations": self.non_zeno,
            "envelope_violations": self.envelope,
            "inconclusive": self.inconclusive,
        }


def check_trigger_set(
    traces: list[Trace],
    triggers: TriggerSet,
    max_alternations: int = 3,
) -> TriggerVerdict:
    """Sufficiency of a trigger set over a suite of traces.

    A trigger "fires" when its named transition fires in the trace.
    Completeness: every risk interval at least the dwell long sees some
    trigger fire inside it. Soundness: governance triggers never fire at
    a no-risk instant, and a low-risk local-recovery segment is not
    blocked from returning. Non-Zeno: bounded stable/recovery alternation
    under persistent risk without reaching assistance or governance.
    The envelope list records instants of stable mode after risk has
    persisted past the dwell.
    """
    verdict = TriggerVerdict()
    for index, trace in enumerate(traces):
        smart = _require_smart(trace)
        label = trace.meta.get("scenario", f"trace#{index}")
        all_names = [t.name for t in triggers.all_triggers()]
        rt_names = [t.name for t in triggers.t_rt]

        for start, end, truncated in trace.predicate_intervals(triggers.u_risk):
            if end - start < triggers.dwell:
                continue
            fired = [e for e in trace.firings(all_names) if start <= e.time < end]
            if not fired:
                verdict.completeness.append(
                    {"trace": label, "interval": [start, end], "truncated": truncated}
                )

        risky = trace.predicate_intervals(triggers.u_risk)

        def in_risk(time: int) -> bool:
            return any(s <= time < e for s, e, _ in risky)

        for event in trace.firings(rt_names):
            if not in_risk(event.time):
                verdict.soundness.append(
                    {"trace": label, "trigger": event.name, "time": event.time}
                )

        for agent in smart.agents:
            risk_expr = (
                _agent_risk(agent) if len(smart.agents) > 1 else triggers.u_risk
            )
            # return not blocked during low-risk local recovery
            for entry, exit_time, _ in trace.mode_residences(agent, "M"):
                span_end = exit_time if exit_time is not None else trace.horizon
                low = [
                    t for t in _instants(trace, entry, span_end)
                    if not trace.eval_at(risk_expr, t)
                ]
                if not low:
                    continue
                guard = smart.net.transitions[agent.switch("t_MS")].guard
                if not any(trace.eval_at(guard, t) for t in low):
                    verdict.soundness.append(
                        {
                            "trace": label,
                            "agent": agent.agent_id or "default",
                            "blocked_return": [entry, span_end],
                        }
                    )
            # bounded alternation and the safety envelope
            for start, end, truncated in trace.predicate_intervals(risk_expr):
                if end - start < triggers.dwell:
                    continue
                timeline = [
                    (t, m) for t, m in trace.mode_timeline(agent) if start <= t < end
                ]
                swaps = sum(1 for _, m in timeline if m in ("S", "M"))
                final_mode = trace.mode_at(agent, end - 1) if end > start else None
                if swaps > max_alternations and final_mode not in ("A", "R"):
                    verdict.non_zeno.append(
                        {
                            "trace": label,
                            "agent": agent.agent_id or "default",
                            "interval": [start, end],
                            "alternations": swaps,
                        }
                    )
                for t in _instants(trace, start + triggers.dwell, end - 1):
                    if trace.mode_at(agent, t) == "S":
                        verdict.envelope.append(
                            {
                                "trace": label,
                                "agent": agent.agent_id or "default",
                                "time": t,
                                "risk_since": start,
                            }
                        )
                        break
    return verdict


def _agent_risk(agent) -> GuardExpr:
    from .guards import Or

    return Or((agent.invalid, agent.unrecoverable))


# --- trace-level formula checking --------------------------------------------


def check_formula_on_trace(trace: Trace, formula) -> "FormulaVerdict":
    """Evaluate one of the four formula schemas against a single trace
    (one path; the explorer covers the branching case). Verdicts use the
    same statuses as graph checking: holds / violated / vacuous /
    inconclusive."""
    from .analysis import FormulaVerdict, HOLDS, INCONCLUSIVE, VACUOUS, VIOLATED

    smart = _require_smart(trace)

    def forbidden_ids() -> set[str]:
        ids: set[str] = set()
        for entry in formula.forbidden:
            if entry in smart.net.transitions:
                ids.add(entry)
            elif entry == "output":
                ids.update(smart.output_transitions)
            else:
                ids.update(t for t, r in smart.net.transitions.items() if r.role == entry)
        return ids

    def marked_within(place: str, start: int, deadline: int) -> bool:
        if trace.marking_at(start).get(place, 0) >= 1:
            return True
        for event in trace.events:
            if event.post_marking is None or event.time > deadline:
                continue
            if event.time >= start and event.post_marking.get(place, 0) >= 1:
                return True
        return False

    intervals = trace.predicate_intervals(formula.condition)
    if not intervals:
        return FormulaVerdict(formula, VACUOUS, detail="condition never held on this trace")

    if formula.kind == "safety":
        ids = forbidden_ids()
        for event in trace.firings(ids):
            if any(s <= event.time < e for s, e, _ in intervals):
                return FormulaVerdict(
                    formula, VIOLATED,
                    [{"time": event.time, "firing": event.name}],
                    f"{event.name} fired at {event.time} under the condition",
                )
        return FormulaVerdict(formula, HOLDS)

    if formula.kind in ("bounded-response", "reach"):
        worst = HOLDS
        for start, end, truncated in intervals:
            deadline = start + formula.within
            if marked_within(formula.place, start, min(deadline, end)):
                continue
            if end <= deadline and not truncated:
                continue  # premise retracted before the deadline matured
            if truncated and trace.horizon < deadline:
                worst = INCONCLUSIVE
                continue
            return FormulaVerdict(
                formula, VIOLATED,
                [{"interval": [start, end]}],
                f"{formula.place} not marked within {formula.within} of {start}",
            )
        return FormulaVerdict(formula, worst)

    if formula.kind == "never-while":
        for start, end, _ in intervals:
            marking = trace.marking_at(start)
            if formula.from_places and not any(marking.get(p, 0) >= 1 for p in formula.from_places):
                continue
            if marking.get(formula.place, 0) >= 1:
                continue
            for event in trace.events:
                if event.post_marking is None or not (start <= event.time < end):
                    continue
                if event.post_marking.get(formula.place, 0) >= 1:
                    return FormulaVerdict(
                        formula, VIOLATED,
                        [{"time": event.time, "interval": [start, end]}],
                        f"{formula.place} marked at {event.time} inside a condition interval",
                    )
        return FormulaVerdict(formula, HOLDS)

    raise ValueError(f"unknown formula kind {formula.kind!r}")


# --- reporting ---------------------------------------------------------------


def render_verdicts(verdicts: list[Verdict]) -> str:
    lines = []
    for verdict in verdicts:
        lines.append(f"{verdict.name:<32} {verdict.status}")
        for violation in verdict.violations:
            lines.append(f"    violation: {violation}")
        for note in verdict.notes:
            lines.append(f"    note: {note}")
    return "\n".join(lines)
