"""Scenario definition and the discrete-event run loop.

A scenario binds a net (builder configuration or net file), a signal
script, a horizon, a firing policy and seed, plus the checks to run.
The loop drives the kernel, interleaving three injections the kernel
itself does not know about:

- output attempts: script entries for the pseudo-signal ``want_output``
  deposit a token into the agent's want place;
- derived timeouts: ``timeout_M`` / ``timeout_A`` flip true when the
  residence clock of the matching recovery place reaches its budget, and
  reset on the next entry to that place;
- derived agreement (opt-in): ``disagree`` / ``agree`` are recomputed
  from the per-agent ``claim_*`` signals after every event.

A run ends at the horizon, or earlier when nothing can ever happen again
(absorbing quiescence, reported but equivalent either way).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any

from .analysis import Formula
from .builder import (
    AgentSpec,
    SmartNet,
    TriggerSet,
    Trigger,
    build_multi_agent,
    build_single_agent,
    default_trigger_set,
)
from .guards import GuardExpr, parse_guard
from .kernel import FiringPolicy, KernelState, advance_to_next_event
from .monitor import (
    PropositionSpec,
    TriggerVerdict,
    Verdict,
    check_trigger_set,
)
from .netio import config_from_document, load_smart
from .signals import SignalState
from .trace import DEPOSIT, FIRE, SIGNAL, Trace, TraceEvent, net_digest

SEED_ENV_VAR = "SMART_TGPN_SEED"

WANT_PREFIX = "want_output"


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    smart: SmartNet
    horizon: int
    policy: str = "earliest"
    seed: int = 0
    script: list[tuple[int, str, Any]] = field(default_factory=list)
    initial_signals: dict[str, Any] = field(default_factory=dict)
    extra_booleans: list[str] = field(default_factory=list)
    extra_reals: list[str] = field(default_factory=list)
    propositions: list[PropositionSpec] = field(default_factory=list)
    formulas: list[Formula] = field(default_factory=list)
    triggers: TriggerSet | None = None
    quiescence: bool = True
    derive_agreement: bool = False
    exploration: dict | None = None
    warnings: list[str] = field(default_factory=list)

    def signal_state(self) -> SignalState:
        booleans = self.smart.bool_signals() + list(self.extra_booleans)
        reals = self.smart.real_signals() + list(self.extra_reals)
        if self.derive_agreement:
            reals += [f"claim{a.suffix}" for a in self.smart.agents]
        initial = dict(self.smart.default_initial_signals())
        initial.update(self.initial_signals)
        sigma = SignalState.declare(booleans, sorted(set(reals)), initial)
        for time, name, value in self.script:
            if name.startswith(WANT_PREFIX):
                continue
            sigma.record(name, value, time)
        return sigma

    def deposits(self) -> list[tuple[int, str]]:
        """(time, want place) for every scripted output attempt."""
        out = []
        for time, name, _ in self.script:
            if not name.startswith(WANT_PREFIX):
                continue
            suffix = name[len(WANT_PREFIX):]
            for agent in self.smart.agents:
                if agent.suffix == suffix:
                    out.append((time, agent.want_place))
                    break
            else:
                raise ScenarioError(f"{name!r} matches no agent")
        return sorted(out)


def _build_net(raw: dict, base_dir: str) -> SmartNet:
    if "file" in raw:
        return load_smart(os.path.join(base_dir, raw["file"]))
    if "builder" not in raw:
        raise ScenarioError("net section needs either 'builder' or 'file'")
    spec = raw["builder"]
    cfg = config_from_document(spec.get("config", {}))
    agents = spec.get("agents", 1)
    if agents in (1, None):
        return build_single_agent(cfg)
    ids = agents if isinstance(agents, list) else [f"a{i + 1}" for i in range(int(agents))]
    return build_multi_agent([AgentSpec(i) for i in ids], base_config=cfg)


def _parse_formula(raw: dict, smart: SmartNet) -> Formula:
    library = smart.predicates()
    condition: GuardExpr = library.expand(parse_guard(raw.get("condition", "true")))
    return Formula(
        kind=raw["kind"],
        condition=condition,
        place=raw.get("place"),
        within=raw.get("within"),
        forbidden=tuple(raw.get("forbidden", [])),
        from_places=tuple(raw.get("from_places", [])),
        name=raw.get("name", raw["kind"]),
    )


def _parse_triggers(raw, smart: SmartNet) -> TriggerSet:
    if raw in (None, "default"):
        return default_trigger_set(smart)
    library = smart.predicates()

    def tier(entries) -> list[Trigger]:
        return [Trigger(e["name"], library.expand(parse_guard(e.get("expr", "true")))) for e in entries]

    return TriggerSet(
        t_m=tier(raw.get("t_m", [])),
        t_a=tier(raw.get("t_a", [])),
        t_rt=tier(raw.get("t_rt", [])),
        u_risk=library.expand(parse_guard(raw["u_risk"])),
        dwell=int(raw.get("dwell", 1)),
    )


def parse_scenario(source: str | dict, base_dir: str | None = None) -> Scenario:
    """Parse and resolve a scenario document (path or already-loaded dict)."""
    if isinstance(source, str):
        base_dir = base_dir or os.path.dirname(os.path.abspath(source))
        with open(source, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{source}: line {exc.lineno}: {exc.msg}") from None
    else:
        doc = source
        base_dir = base_dir or "."

    for key in ("name", "net", "horizon"):
        if key not in doc:
            raise ScenarioError(f"scenario lacks required field {key!r}")
    smart = _build_net(doc["net"], base_dir)
    horizon = int(doc["horizon"])
    if horizon < 0:
        raise ScenarioError("horizon must be >= 0")

    warnings: list[str] = []
    declare = doc.get("declare", {})
    extra_booleans = list(declare.get("booleans", []))
    extra_reals = list(declare.get("reals", []))
    known = set(smart.bool_signals()) | set(smart.real_signals()) | set(extra_booleans) | set(extra_reals)
    if doc.get("derive_agreement", False):
        known |= {f"claim{a.suffix}" for a in smart.agents}

    initial = dict(doc.get("signals", {}))
    for name in initial:
        if name not in known:
            raise ScenarioError(f"initial value for undeclared signal {name!r}")
    for name in extra_reals:
        if name not in initial:
            warnings.append(f"real signal {name!r} has no initial value; defaulting to 0")

    script: list[tuple[int, str, Any]] = []
    for index, entry in enumerate(doc.get("script", [])):
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise ScenarioError(f"script[{index}]: expected [time, signal, value]")
        time, name, value = int(entry[0]), str(entry[1]), entry[2]
        if time < 0 or time > horizon:
            raise ScenarioError(f"script[{index}]: time {time} outside [0, {horizon}]")
        if not name.startswith(WANT_PREFIX) and name not in known:
            raise ScenarioError(f"script[{index}]: undeclared signal {name!r}")
        script.append((time, name, value))
    script.sort(key=lambda e: (e[0], e[1]))

    seed = doc.get("seed")
    if seed is None:
        seed = int(os.environ.get(SEED_ENV_VAR, "0"))

    scenario = Scenario(
        name=doc["name"],
        smart=smart,
        horizon=horizon,
        policy=doc.get("policy", "earliest"),
        seed=int(seed),
        script=script,
        initial_signals=initial,
        extra_booleans=extra_booleans,
        extra_reals=extra_reals,
        propositions=[PropositionSpec(p) for p in doc.get("propositions", [])],
        formulas=[_parse_formula(raw, smart) for raw in doc.get("formulas", [])],
        triggers=_parse_triggers(doc.get("triggers"), smart) if "triggers" in doc else None,
        quiescence=bool(doc.get("quiescence", True)),
        derive_agreement=bool(doc.get("derive_agreement", False)),
        exploration=doc.get("exploration"),
        warnings=warnings,
    )
    return scenario


@dataclass
class RunReport:
    scenario: str
    verdicts: list[Verdict] = field(default_factory=list)
    formula_verdicts: list = field(default_factory=list)
    trigger_verdict: TriggerVerdict | None = None
    stats: dict = field(default_factory=dict)
    quiesced_at: int | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        bad = [v for v in self.verdicts if v.status == "violation"]
        bad += [v for v in self.formula_verdicts if v.status == "violated"]
        if self.trigger_verdict is not None and not self.trigger_verdict.ok:
            bad.append(self.trigger_verdict)
        if bad:
            return "violation"
        inconclusive = any(v.status == "inconclusive" for v in self.verdicts)
        inconclusive = inconclusive or any(v.status == "inconclusive" for v in self.formula_verdicts)
        return "inconclusive" if inconclusive else "pass"

    def to_record(self) -> dict:
        return {
            "scenario": self.scenario,
            "status": self.status,
            "verdicts": [v.to_record() for v in self.verdicts],
            "formulas": [
                {
                    "name": v.formula.label() if hasattr(v, "formula") else v.name,
                    "status": v.status,
                    "detail": getattr(v, "detail", ""),
                }
                for v in self.formula_verdicts
            ],
            "triggers": self.trigger_verdict.to_record() if self.trigger_verdict else None,
            "stats": self.stats,
            "quiesced_at": self.quiesced_at,
            "warnings": self.warnings,
        }

    def table(self) -> str:
        lines = [f"scenario: {self.scenario}   status: {self.status}"]
        if self.quiesced_at is not None:
            lines.append(f"  quiesced at t={self.quiesced_at}")
        for verdict in self.verdicts:
            lines.append(f"  {verdict.name:<34} {verdict.status}")
            for violation in verdict.violations:
                lines.append(f"      {violation}")
        for verdict in self.formula_verdicts:
            name = verdict.formula.label() if hasattr(verdict, "formula") else verdict.name
            lines.append(f"  formula {name:<26} {verdict.status}")
        if self.trigger_verdict is not None:
            record = self.trigger_verdict.to_record()
            lines.append(f"  trigger-set {'pass' if self.trigger_verdict.ok else 'violation'}")
            for kind in ("completeness_violations", "soundness_violations", "non_zeno_violations"):
                for item in record[kind]:
                    lines.append(f"      {kind.split('_')[0]}: {item}")
        return "\n".join(lines)


class _DerivedClocks:
    """Residence clocks behind timeout_M / timeout_A, per agent.

    A timeout flips true when continuous residence in the matching place
    reaches its budget; it resets (lazily) at the next entry to the place.
    """

    def __init__(self, smart: SmartNet, marking):
        self.smart = smart
        self.entered: dict[tuple[str, str], int | None] = {}
        for agent in smart.agents:
            for key in ("M", "A"):
                marked = marking.get(agent.mode_places[key], 0) >= 1
                self.entered[(agent.suffix, key)] = 0 if marked else None

    def on_marking(self, marking, time: int, sigma: SignalState) -> None:
        for agent in self.smart.agents:
            for key in ("M", "A"):
                slot = (agent.suffix, key)
                marked = marking.get(agent.mode_places[key], 0) >= 1
                if marked and self.entered[slot] is None:
                    self.entered[slot] = time
                    name = f"timeout_{key}{agent.suffix}"
                    if bool(sigma.value_at(name, time)):
                        sigma.record(name, False, time)
                elif not marked and self.entered[slot] is not None:
                    self.entered[slot] = None

    def next_flip(self, sigma: SignalState, now: int) -> int | None:
        best = None
        for agent in self.smart.agents:
            for key, budget in (("M", agent.config.budget_m), ("A", agent.config.budget_a)):
                since = self.entered[(agent.suffix, key)]
                if since is None:
                    continue
                name = f"timeout_{key}{agent.suffix}"
                if bool(sigma.value_at(name, now)):
                    continue
                flip = since + budget
                if flip >= now and (best is None or flip < best):
                    best = flip
        return best

    def flip_due(self, sigma: SignalState, now: int) -> bool:
        changed = False
        for agent in self.smart.agents:
            for key, budget in (("M", agent.config.budget_m), ("A", agent.config.budget_a)):
                since = self.entered[(agent.suffix, key)]
                name = f"timeout_{key}{agent.suffix}"
                if since is not None and now >= since + budget and not bool(sigma.value_at(name, now)):
                    sigma.record(name, True, now)
                    changed = True
        return changed


def _derive_agreement(smart: SmartNet, sigma: SignalState, now: int) -> None:
    claims = [float(sigma.value_at(f"claim{a.suffix}", now)) for a in smart.agents]
    disagree = any(a != b for a, b in zip(claims, claims[1:]))
    for name, value in (("disagree", disagree), ("agree", not disagree)):
        if bool(sigma.value_at(name, now)) != value:
            sigma.record(name, value, now)


def run(scenario: Scenario) -> tuple[Trace, RunReport]:
    """Execute a scenario and evaluate its requested checks."""
    from .kernel import _next_candidate

    smart = scenario.smart
    net = smart.net
    sigma = scenario.signal_state()
    policy = FiringPolicy(scenario.policy, seed=scenario.seed)
    state = KernelState.initial(net)
    deposits = scenario.deposits()
    clocks = _DerivedClocks(smart, state.marking)
    events: list[TraceEvent] = []

    if scenario.derive_agreement:
        _derive_agreement(smart, sigma, 0)

    while state.now <= scenario.horizon:
        if scenario.derive_agreement:
            _derive_agreement(smart, sigma, state.now)
        progressed = clocks.flip_due(sigma, state.now)
        while deposits and deposits[0][0] == state.now:
            _, place = deposits.pop(0)
            state.marking[place] = state.marking.get(place, 0) + 1
            state.marking_history.append((state.now, dict(state.marking)))
            events.append(TraceEvent(state.now, DEPOSIT, place, post_marking=dict(state.marking)))
            progressed = True

        injections = [t for t in (clocks.next_flip(sigma, state.now),) if t is not None]
        if deposits:
            injections.append(deposits[0][0])
        if scenario.derive_agreement:
            # agreement is recomputed from claims, so the kernel must not
            # fire past a scripted change before the derivation catches up
            nxt = sigma.next_change_after(state.now)
            if nxt is not None:
                injections.append(nxt)
        limit = min(min(injections) if injections else scenario.horizon + 1, scenario.horizon + 1)
        if limit <= state.now:
            raise RuntimeError(f"scheduler stalled at t={state.now}")  # injections are always ahead

        state, fired = advance_to_next_event(net, state, sigma, policy, limit)

        for event in fired:
            events.append(TraceEvent(event.time, FIRE, event.transition, post_marking=dict(event.post_marking)))
        if fired or progressed:
            clocks.on_marking(state.marking, state.now, sigma)

    # absorbing quiescence: nothing happened after the last event and
    # nothing ever can (no kernel candidate, pending deposit, or timeout)
    quiesced_at: int | None = None
    if scenario.quiescence and not deposits and clocks.next_flip(sigma, state.now) is None:
        if _next_candidate(net, state, sigma, policy) is None:
            last_activity = max((e.time for e in events), default=0)
            if last_activity < scenario.horizon:
                quiesced_at = last_activity

    # signal events come from the recorded histories: scripted changes,
    # derived timeouts, and agreement updates alike (t=0 values are the
    # header's initials, not events)
    for name in sorted(sigma.histories):
        for t, value in sigma.histories[name]:
            if 0 < t <= scenario.horizon:
                events.append(TraceEvent(t, SIGNAL, name, value=value))

    order = {SIGNAL: 0, DEPOSIT: 1, FIRE: 2}
    events.sort(key=lambda e: (e.time, order[e.kind]))
    trace = Trace(
        events=events,
        sigma=sigma,
        initial_marking=net.marking0(),
        horizon=scenario.horizon,
        quiesced_at=quiesced_at,
        meta={
            "scenario": scenario.name,
            "policy": scenario.policy,
            "seed": scenario.seed,
            "gating": smart.gating_mode,
            "net_digest": net_digest(net),
        },
        smart=smart,
    )
    report = verify(trace, scenario)
    return trace, report


def verify(trace: Trace, scenario: Scenario) -> RunReport:
    """Run the scenario's monitors and trace-level formulas on a trace."""
    from .monitor import check_formula_on_trace

    if trace.smart is None:
        trace.smart = scenario.smart
    report = RunReport(scenario.name, warnings=list(scenario.warnings))
    report.quiesced_at = trace.quiesced_at
    for spec in scenario.propositions:
        report.verdicts.append(spec.run(trace))
    for formula in scenario.formulas:
        report.formula_verdicts.append(check_formula_on_trace(trace, formula))
    if scenario.triggers is not None:
        report.trigger_verdict = check_trigger_set([trace], scenario.triggers)
    report.stats = trace.stats()
    return report
