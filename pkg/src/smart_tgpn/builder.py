"""Construction of SMART autonomy nets.

A SMART net has four mode places per agent (P_S stable, P_M local
recovery, P_A assisted recovery, P_R regulated control) holding a single
mode token, guarded mode-switch transitions between them, output
transitions gated on P_S, and a coordination subnet (claim / check /
agree / conflict) that tracks consensus progress while the mode token
sits in P_A.

Output attempts are modeled as tokens in a want-place consumed by the
output transition, which reads and restores the P_S token, so output
never moves the mode token and each scripted attempt fires at most once.

Escalation and governance transitions are strongly timed with finite
deadlines; returns are weak. Timeouts (timeout_M / timeout_A) are derived
signals maintained by the run loop from residence budgets B_M / B_A.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .guards import (
    And,
    Cmp,
    GuardExpr,
    HeldFor,
    Marked,
    Not,
    Or,
    PredicateLibrary,
    Sig,
    TRUE,
    eval_with_assignment,
)
from .hierarchy import InterfaceSpec, Subnet
from .net import (
    Arc,
    INF,
    Net,
    PriorityClass,
    ROLE_INTERNAL,
    ROLE_MODE_SWITCH,
    ROLE_OUTPUT,
    STRONG,
    TransitionRecord,
    WEAK,
)

GATING_GUARDED = "structural+guarded"
GATING_STRUCTURAL = "structural-only"

MODE_KEYS = ("S", "M", "A", "R")

COORDINATION_PLACES = ["P_Aentry", "P_claim", "P_check", "P_agree", "P_conflict"]

AGENT_BOOL_SIGNALS = ["anom", "evidence", "safe", "hardware_fault", "assist", "ext_auth"]
AGENT_REAL_SIGNALS = ["U"]
AGENT_DERIVED_SIGNALS = ["timeout_M", "timeout_A"]
SHARED_BOOL_SIGNALS = ["disagree", "agree"]


class SmartConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Hysteresis:
    enabled: bool = False
    theta_up: float = 0.7
    theta_down: float = 0.3
    debounce_up: int = 2  # escalation must hold this long
    debounce_down: int = 2  # return condition must hold this long

    def validate(self) -> None:
        if self.enabled and not self.theta_down < self.theta_up:
            raise SmartConfigError("hysteresis requires theta_down < theta_up")
        if self.debounce_up < 0 or self.debounce_down < 0:
            raise SmartConfigError("debounce durations must be >= 0")


@dataclass(frozen=True)
class SmartConfig:
    """Deadlines, budgets, thresholds, and output gating for one agent."""

    delta_s: int = 2
    delta_sr: int = 1
    delta_m: int = 1
    delta_mr: int = 1
    delta_a: int = 2
    delta_ar: int = 1
    budget_m: int = 5
    budget_a: int = 5
    theta: float = 0.5
    hysteresis: Hysteresis = field(default_factory=Hysteresis)
    gating_mode: str = GATING_GUARDED

    def validate(self) -> None:
        deadlines = {
            "delta_s": self.delta_s,
            "delta_sr": self.delta_sr,
            "delta_m": self.delta_m,
            "delta_mr": self.delta_mr,
            "delta_a": self.delta_a,
            "delta_ar": self.delta_ar,
            "budget_m": self.budget_m,
            "budget_a": self.budget_a,
        }
        for name, value in deadlines.items():
            if not (isinstance(value, int) and 0 < value < INF):
                raise SmartConfigError(f"{name} must be a positive finite tick count, got {value!r}")
        if self.gating_mode not in (GATING_GUARDED, GATING_STRUCTURAL):
            raise SmartConfigError(f"unknown gating mode {self.gating_mode!r}")
        self.hysteresis.validate()

    @property
    def governance_bound(self) -> int:
        """Worst-case ticks from persistent unsafety to P_R."""
        return max(self.delta_sr, self.delta_s + self.delta_mr, self.delta_mr, self.delta_ar)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    config: SmartConfig | None = None


@dataclass
class AgentView:
    """Per-agent name bindings and derived predicates of a built net."""

    agent_id: str | None
    suffix: str
    config: SmartConfig
    mode_places: dict[str, str]
    mode_switches: dict[str, str]
    outputs: list[str]
    want_place: str
    invalid: GuardExpr
    unrecoverable: GuardExpr

    def signal(self, base: str) -> str:
        return base + self.suffix

    def place(self, key: str) -> str:
        return self.mode_places[key]

    def switch(self, key: str) -> str:
        return self.mode_switches[key]

    def bool_signals(self) -> list[str]:
        return [s + self.suffix for s in AGENT_BOOL_SIGNALS + AGENT_DERIVED_SIGNALS]

    def real_signals(self) -> list[str]:
        return [s + self.suffix for s in AGENT_REAL_SIGNALS]


@dataclass
class SmartNet:
    """A built net plus the role annotations analysis and monitors use."""

    net: Net
    config: SmartConfig
    agents: list[AgentView]
    coordination_places: list[str]
    gating_mode: str

    @property
    def mode_place_ids(self) -> list[str]:
        return [p for agent in self.agents for p in agent.mode_places.values()]

    @property
    def output_transitions(self) -> list[str]:
        return [t for agent in self.agents for t in agent.outputs]

    @property
    def mode_switch_transitions(self) -> list[str]:
        return [t for agent in self.agents for t in agent.mode_switches.values()]

    def agent(self, agent_id: str | None = None) -> AgentView:
        for view in self.agents:
            if view.agent_id == agent_id:
                return view
        raise KeyError(f"no agent {agent_id!r}")

    def bool_signals(self) -> list[str]:
        names = [s for agent in self.agents for s in agent.bool_signals()]
        names += SHARED_BOOL_SIGNALS
        return sorted(dict.fromkeys(names))

    def real_signals(self) -> list[str]:
        return sorted({s for agent in self.agents for s in agent.real_signals()})

    def default_initial_signals(self) -> dict[str, bool]:
        """A stable start: safety and evidence hold, everything else quiet."""
        initial: dict[str, bool] = {}
        for agent in self.agents:
            initial[agent.signal("safe")] = True
            initial[agent.signal("evidence")] = True
        return initial

    def predicates(self) -> PredicateLibrary:
        """Named derived predicates for formulas, triggers, and monitors:
        invalid / UR plus the raised and lowered hysteresis variants, per
        agent namespace."""
        library = PredicateLibrary()
        for agent in self.agents:
            hyst = agent.config.hysteresis
            library.define("invalid" + agent.suffix, agent.invalid)
            library.define("UR" + agent.suffix, agent.unrecoverable)
            library.define("invalid_up" + agent.suffix, invalid_expr(hyst.theta_up, agent.suffix))
            library.define("valid_down" + agent.suffix, valid_expr(hyst.theta_down, agent.suffix))
        return library

    def coordination_subnet(self) -> tuple[Subnet, InterfaceSpec]:
        """The consensus subnet viewed through the refinement interface:
        the mode-switch into A deposits the coordination token, the
        return-to-S switch extracts it from the success exit."""
        sub_places = list(self.coordination_places)
        sub_transitions = {}
        sub_arcs = []
        subnet_ids = {"t_propose", "t_verify", "t_agree", "t_conflict", "t_resolve", "t_Aexit"}
        place_set = set(sub_places)
        for tid in subnet_ids:
            record = self.net.transitions.get(tid)
            if record is None:
                continue
            sub_transitions[tid] = record
            for p, w in self.net.pre(tid).items():
                if p in place_set:
                    sub_arcs.append(Arc(p, tid, w))
            for p, w in self.net.post(tid).items():
                if p in place_set:
                    sub_arcs.append(Arc(tid, p, w))
        sub = Subnet(
            net=Net(sub_places, sub_transitions, sub_arcs),
            entry=["P_Aentry"],
            exit=["P_agree"],
            success_exit=["P_agree"],
        )
        first = self.agents[0]
        iface = InterfaceSpec(
            in_transition=first.switch("t_MA"),
            out_transition=first.switch("t_AS"),
            exit_guard=self.net.transitions[first.switch("t_AS")].guard,
        )
        return sub, iface


def invalid_expr(theta: float, suffix: str = "") -> GuardExpr:
    return Or((Cmp("U" + suffix, ">=", theta), Sig("anom" + suffix), Not(Sig("evidence" + suffix))))


def valid_expr(theta: float, suffix: str = "") -> GuardExpr:
    return And((Cmp("U" + suffix, "<=", theta), Not(Sig("anom" + suffix)), Sig("evidence" + suffix)))


def unrecoverable_expr(suffix: str = "") -> GuardExpr:
    return Or((Not(Sig("safe" + suffix)), Sig("hardware_fault" + suffix)))


def _macro_parts(cfg: SmartConfig, suffix: str, entry: str | None):
    """Places, transitions, and arcs of one agent's macro-level net.

    ``entry`` names the coordination subnet's entry place (the assisted
    escalation deposits the consensus token there); None leaves the
    assisted place opaque."""
    p_s, p_m, p_a, p_r = (f"P_{k}{suffix}" for k in MODE_KEYS)
    p_want = f"P_want{suffix}"

    invalid = invalid_expr(cfg.theta, suffix)
    ur = unrecoverable_expr(suffix)
    sig = lambda base: Sig(base + suffix)

    out_guard = And((Not(invalid), Not(ur))) if cfg.gating_mode == GATING_GUARDED else TRUE

    transitions = {
        f"t_out{suffix}": TransitionRecord(
            f"t_out{suffix}", out_guard, 0, INF, WEAK, ROLE_OUTPUT, PriorityClass.OUTPUT
        ),
        f"t_SM{suffix}": TransitionRecord(
            f"t_SM{suffix}", And((invalid, Not(ur))), 0, cfg.delta_s, STRONG,
            ROLE_MODE_SWITCH, PriorityClass.ESCALATION,
        ),
        f"t_SR{suffix}": TransitionRecord(
            f"t_SR{suffix}", ur, 0, cfg.delta_sr, STRONG, ROLE_MODE_SWITCH, PriorityClass.GOVERNANCE
        ),
        f"t_MS{suffix}": TransitionRecord(
            f"t_MS{suffix}", And((Not(invalid), Not(ur))), 0, INF, WEAK,
            ROLE_MODE_SWITCH, PriorityClass.RECOVERY_RETURN,
        ),
        f"t_MA{suffix}": TransitionRecord(
            f"t_MA{suffix}",
            And((invalid, sig("timeout_M"), Not(ur), sig("assist"))),
            0, cfg.delta_m, STRONG, ROLE_MODE_SWITCH, PriorityClass.ESCALATION,
        ),
        f"t_MR{suffix}": TransitionRecord(
            f"t_MR{suffix}",
            Or((ur, And((invalid, sig("timeout_M"), Not(sig("assist")))))),
            0, cfg.delta_mr, STRONG, ROLE_MODE_SWITCH, PriorityClass.GOVERNANCE,
        ),
        f"t_AR{suffix}": TransitionRecord(
            f"t_AR{suffix}",
            Or((ur, And((Marked("P_conflict"), sig("timeout_A"))))) if entry
            else Or((ur, And((Sig("disagree"), sig("timeout_A"))))),
            0, cfg.delta_ar, STRONG, ROLE_MODE_SWITCH, PriorityClass.GOVERNANCE,
        ),
        f"t_RS{suffix}": TransitionRecord(
            f"t_RS{suffix}", And((sig("ext_auth"), Not(ur))), 0, INF, WEAK,
            ROLE_MODE_SWITCH, PriorityClass.RECOVERY_RETURN,
        ),
    }

    arcs = [
        Arc(p_s, f"t_out{suffix}"), Arc(p_want, f"t_out{suffix}"), Arc(f"t_out{suffix}", p_s),
        Arc(p_s, f"t_SM{suffix}"), Arc(f"t_SM{suffix}", p_m),
        Arc(p_s, f"t_SR{suffix}"), Arc(f"t_SR{suffix}", p_r),
        Arc(p_m, f"t_MS{suffix}"), Arc(f"t_MS{suffix}", p_s),
        Arc(p_m, f"t_MA{suffix}"), Arc(f"t_MA{suffix}", p_a),
        Arc(p_m, f"t_MR{suffix}"), Arc(f"t_MR{suffix}", p_r),
        Arc(p_a, f"t_AR{suffix}"), Arc(f"t_AR{suffix}", p_r),
        Arc(p_r, f"t_RS{suffix}"), Arc(f"t_RS{suffix}", p_s),
    ]
    if entry is not None:
        arcs.append(Arc(f"t_MA{suffix}", entry))
    places = [p_s, p_m, p_a, p_r, p_want]
    return places, transitions, arcs


def _coordination_parts(mode_a_places: list[str], consensus_guards: dict[str, GuardExpr] | None = None):
    """Shared claim/check/agree/conflict machinery. Transitions only run
    while some agent's mode token is in A, so the subnet freezes (and the
    run quiesces) under regulated control.

    ``consensus_guards`` optionally supplies extra conjuncts for the
    agree / conflict verdicts (evidence and safety for a single agent;
    multi-agent verdicts are driven by the shared agreement signals only).
    """
    places = list(COORDINATION_PLACES)
    entry, claim, check, agree, conflict = places
    in_a: GuardExpr = Marked(mode_a_places[0])
    if len(mode_a_places) > 1:
        in_a = Or(tuple(Marked(p) for p in mode_a_places))
    no_disagree = Not(Sig("disagree"))
    extra = consensus_guards or {}

    def record(tid: str, guard: GuardExpr, alpha: int = 0, beta: float = 1) -> TransitionRecord:
        return TransitionRecord(tid, guard, alpha, beta, WEAK, ROLE_INTERNAL, PriorityClass.INTERNAL)

    def conj(*parts: GuardExpr) -> GuardExpr:
        terms = tuple(p for p in parts if p != TRUE)
        return terms[0] if len(terms) == 1 else And(terms)

    transitions = {
        "t_propose": record("t_propose", in_a),
        "t_verify": record("t_verify", in_a),
        "t_agree": record("t_agree", conj(no_disagree, extra.get("agree", TRUE), in_a)),
        "t_conflict": record("t_conflict", conj(Sig("disagree"), extra.get("conflict", TRUE), in_a)),
        "t_resolve": record("t_resolve", conj(no_disagree, in_a)),
        "t_Aexit": record("t_Aexit", conj(Marked(agree), in_a), alpha=1, beta=1),
    }
    arcs = [
        Arc(entry, "t_propose"), Arc("t_propose", claim),
        Arc(claim, "t_verify"), Arc("t_verify", check),
        Arc(check, "t_agree"), Arc("t_agree", agree),
        Arc(check, "t_conflict"), Arc("t_conflict", conflict),
        Arc(conflict, "t_resolve"), Arc("t_resolve", claim),
        Arc(agree, "t_Aexit"), Arc("t_Aexit", agree),
    ]
    return places, transitions, arcs


def _agent_view(cfg: SmartConfig, agent_id: str | None, suffix: str) -> AgentView:
    return AgentView(
        agent_id=agent_id,
        suffix=suffix,
        config=cfg,
        mode_places={k: f"P_{k}{suffix}" for k in MODE_KEYS},
        mode_switches={
            key: key + suffix
            for key in ("t_SM", "t_SR", "t_MS", "t_MA", "t_MR", "t_AS", "t_AR", "t_RS")
        },
        outputs=[f"t_out{suffix}"],
        want_place=f"P_want{suffix}",
        invalid=invalid_expr(cfg.theta, suffix),
        unrecoverable=unrecoverable_expr(suffix),
    )


def build_single_agent(cfg: SmartConfig, triggers: "TriggerSet | None" = None) -> SmartNet:
    """The reference single-agent SMART net, coordination subnet attached.

    The return-from-A switch consumes both the mode token and the
    consensus token in P_agree, so a legitimate return requires recorded
    consensus; its guard restates that structurally visible condition."""
    cfg.validate()
    places, transitions, arcs = _macro_parts(cfg, "", entry="P_Aentry")
    invalid = invalid_expr(cfg.theta)
    ur = unrecoverable_expr()

    transitions["t_AS"] = TransitionRecord(
        "t_AS",
        And((Marked("P_agree"), Not(Sig("disagree")), Not(invalid), Not(ur))),
        0, cfg.delta_a, STRONG, ROLE_MODE_SWITCH, PriorityClass.RECOVERY_RETURN,
    )
    arcs += [Arc("P_A", "t_AS"), Arc("P_agree", "t_AS"), Arc("t_AS", "P_S")]

    c_places, c_transitions, c_arcs = _coordination_parts(
        ["P_A"],
        consensus_guards={
            "agree": And((Sig("evidence"), Not(ur))),
            "conflict": Not(ur),
        },
    )
    net = Net(
        places=places + c_places,
        transitions={**transitions, **c_transitions},
        arcs=arcs + c_arcs,
        initial_marking={"P_S": 1},
        refinable=set(),
    )
    smart = SmartNet(net, cfg, [_agent_view(cfg, None, "")], c_places, cfg.gating_mode)
    if cfg.hysteresis.enabled:
        smart = apply_hysteresis(smart, cfg)
    return smart


def build_macro_only(cfg: SmartConfig) -> SmartNet:
    """Single-agent macro level with P_A left refinable: the assisted
    state is opaque and its return guard is signal-only."""
    cfg.validate()
    places, transitions, arcs = _macro_parts(cfg, "", entry=None)
    invalid = invalid_expr(cfg.theta)
    ur = unrecoverable_expr()
    transitions["t_AS"] = TransitionRecord(
        "t_AS",
        And((Not(Sig("disagree")), Sig("agree"), Not(invalid), Not(ur))),
        0, cfg.delta_a, STRONG, ROLE_MODE_SWITCH, PriorityClass.RECOVERY_RETURN,
    )
    arcs += [Arc("P_A", "t_AS"), Arc("t_AS", "P_S")]
    # the abort exit cannot reference coordination places at macro level
    transitions["t_AR"] = TransitionRecord(
        "t_AR",
        Or((ur, And((Sig("disagree"), Sig("timeout_A"))))),
        0, cfg.delta_ar, STRONG, ROLE_MODE_SWITCH, PriorityClass.GOVERNANCE,
    )
    net = Net(places, transitions, arcs, {"P_S": 1}, refinable={"P_A"})
    return SmartNet(net, cfg, [_agent_view(cfg, None, "")], [], cfg.gating_mode)


def build_multi_agent(agents: list[AgentSpec], shared: "TriggerSet | None" = None,
                      base_config: SmartConfig | None = None) -> SmartNet:
    """Namespaced per-agent macro nets plus one shared coordination subnet.

    Agreement is a joint property: disagree / agree are shared signals and
    each agent's return-from-A guard requires resolved agreement. Each
    escalation into A deposits a consensus token into the shared subnet.
    """
    if len(agents) < 2:
        raise SmartConfigError("multi-agent build requires at least 2 agents (use build_single_agent)")
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise SmartConfigError(f"duplicate agent ids in {ids}")

    base = base_config or SmartConfig()
    all_places: list[str] = []
    all_transitions: dict[str, TransitionRecord] = {}
    all_arcs: list[Arc] = []
    views: list[AgentView] = []
    marking: dict[str, int] = {}

    for spec in agents:
        cfg = spec.config or base
        cfg.validate()
        suffix = f"_{spec.agent_id}"
        places, transitions, arcs = _macro_parts(cfg, suffix, entry="P_Aentry")
        invalid = invalid_expr(cfg.theta, suffix)
        ur = unrecoverable_expr(suffix)
        tid = f"t_AS{suffix}"
        transitions[tid] = TransitionRecord(
            tid,
            And((Not(Sig("disagree")), Sig("agree"), Not(invalid), Not(ur))),
            0, cfg.delta_a, STRONG, ROLE_MODE_SWITCH, PriorityClass.RECOVERY_RETURN,
        )
        arcs += [Arc(f"P_A{suffix}", tid), Arc(tid, f"P_S{suffix}")]
        tid = f"t_AR{suffix}"
        transitions[tid] = TransitionRecord(
            tid,
            Or((ur, And((Sig("disagree"), Sig(f"timeout_A{suffix}"))))),
            0, cfg.delta_ar, STRONG, ROLE_MODE_SWITCH, PriorityClass.GOVERNANCE,
        )
        all_places += places
        all_transitions.update(transitions)
        all_arcs += arcs
        marking[f"P_S{suffix}"] = 1
        views.append(_agent_view(cfg, spec.agent_id, suffix))

    mode_a = [f"P_A_{a.agent_id}" for a in agents]
    c_places, c_transitions, c_arcs = _coordination_parts(mode_a)
    all_transitions.update(c_transitions)

    net = Net(all_places + c_places, all_transitions, all_arcs + c_arcs, marking)
    return SmartNet(net, base, views, c_places, base.gating_mode)


def apply_hysteresis(smart: SmartNet, cfg: SmartConfig) -> SmartNet:
    """Rewrite escalation and return guards with two-threshold debounce.

    Escalation requires the raised-threshold invalidity to have held for
    the escalate debounce; return requires the lowered-threshold validity
    to have held for the return debounce. Only those two guards change.
    """
    if not cfg.hysteresis.enabled:
        return smart
    cfg.hysteresis.validate()
    hyst = cfg.hysteresis
    records = []
    for agent in smart.agents:
        up = HeldFor(invalid_expr(hyst.theta_up, agent.suffix), hyst.debounce_up)
        down = HeldFor(valid_expr(hyst.theta_down, agent.suffix), hyst.debounce_down)
        ur = unrecoverable_expr(agent.suffix)
        t_sm = smart.net.transitions[agent.switch("t_SM")]
        t_ms = smart.net.transitions[agent.switch("t_MS")]
        records.append(t_sm.with_guard(And((up, Not(ur)))))
        records.append(t_ms.with_guard(And((down, Not(ur)))))
    return SmartNet(
        smart.net.with_transitions(records),
        smart.config,
        smart.agents,
        smart.coordination_places,
        smart.gating_mode,
    )


# --- trigger sets ------------------------------------------------------------


@dataclass(frozen=True)
class Trigger:
    """A named escalation probe; when the name matches a transition id the
    trigger is considered to fire when that transition fires."""

    name: str
    expr: GuardExpr


@dataclass
class TriggerSet:
    t_m: list[Trigger]
    t_a: list[Trigger]
    t_rt: list[Trigger]
    u_risk: GuardExpr
    dwell: int = 1

    def all_triggers(self) -> list[Trigger]:
        return list(self.t_m) + list(self.t_a) + list(self.t_rt)

    def without(self, name: str) -> "TriggerSet":
        """Copy with one trigger removed (mutation fixtures)."""
        strip = lambda triggers: [t for t in triggers if t.name != name]
        return TriggerSet(strip(self.t_m), strip(self.t_a), strip(self.t_rt), self.u_risk, self.dwell)


def default_trigger_set(smart: SmartNet) -> TriggerSet:
    """Mirror the built net's own escalation guards as the trigger set.
    Transitions absent from the net (mutation fixtures) contribute no
    trigger."""
    t_m, t_a, t_rt = [], [], []
    risk_terms: list[GuardExpr] = []
    for agent in smart.agents:
        def trigger_for(key: str) -> Trigger | None:
            record = smart.net.transitions.get(agent.switch(key))
            return Trigger(agent.switch(key), record.guard) if record else None

        for tier, keys in ((t_m, ("t_SM",)), (t_a, ("t_MA",)), (t_rt, ("t_SR", "t_MR", "t_AR"))):
            for key in keys:
                trigger = trigger_for(key)
                if trigger is not None:
                    tier.append(trigger)
        risk_terms.append(Or((agent.invalid, agent.unrecoverable)))
    u_risk = risk_terms[0] if len(risk_terms) == 1 else Or(tuple(risk_terms))
    return TriggerSet(t_m, t_a, t_rt, u_risk, dwell=1)


# --- SMART structure validation ----------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    witnesses: list[str] = field(default_factory=list)


@dataclass
class SmartStructureReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"{c.name}: {'pass' if c.passed else 'FAIL'}")
            lines.extend(f"  {w}" for w in c.witnesses)
        return "\n".join(lines)


def _guard_satisfiable(guard: GuardExpr, fixed: dict[str, bool]) -> bool:
    """Can any assignment to the guard's atoms (with some signals pinned)
    make it true? Atoms are treated independently, which is exact for the
    builder's guards and conservative otherwise."""
    from .guards import atoms_of

    atoms: list[GuardExpr] = []
    for atom in atoms_of(guard):
        if atom not in atoms:
            atoms.append(atom)
    for bits in range(2 ** len(atoms)):
        assignment = {atom: bool(bits >> i & 1) for i, atom in enumerate(atoms)}
        for atom in atoms:
            name = getattr(atom, "name", None)
            if name in fixed:
                assignment[atom] = fixed[name]
        if eval_with_assignment(guard, lambda a: assignment[a]):
            return True
    return False


def _true_under(guard: GuardExpr, signal_values: dict[str, bool], marking_places: set[str]) -> bool:
    """Evaluate a guard under an explicit boolean assignment; threshold
    atoms read 0.0 for their signal, marking atoms read the given set."""

    def assign(atom) -> bool:
        if isinstance(atom, Sig):
            return signal_values.get(atom.name, False)
        if isinstance(atom, Cmp):
            value = 0.0
            return value >= atom.threshold if atom.op == ">=" else value <= atom.threshold
        if isinstance(atom, Marked):
            return atom.place in marking_places
        if isinstance(atom, HeldFor):
            return False
        raise TypeError(atom)

    return eval_with_assignment(guard, assign)


def validate_smart(smart: SmartNet) -> SmartStructureReport:
    """SMART-specific structural checks over a built or loaded net."""
    net = smart.net
    mode_places = set(smart.mode_place_ids)
    checks: list[CheckResult] = []

    # (a) outputs gated on the owning agent's P_S and no other mode place
    gate = CheckResult("output-gating", True)
    for agent in smart.agents:
        for tid in agent.outputs:
            pre = net.pre(tid)
            if pre.get(agent.place("S"), 0) < 1:
                gate.passed = False
                gate.witnesses.append(f"{tid}: {agent.place('S')} is not a preplace")
            others = sorted(set(pre) & (mode_places - {agent.place("S")}))
            if others:
                gate.passed = False
                gate.witnesses.append(f"{tid}: other mode places as preplaces: {others}")
    checks.append(gate)

    # (b) S, M, A each have a governance exit that opens under unsafety
    governance = CheckResult("governance-exits", True)
    for agent in smart.agents:
        unsafe = {agent.signal("safe"): False, agent.signal("hardware_fault"): True}
        for key in ("S", "M", "A"):
            place = agent.place(key)
            found = False
            for tid in net.transition_ids():
                if net.pre(tid).get(place, 0) >= 1 and net.post(tid).get(agent.place("R"), 0) >= 1:
                    values = dict.fromkeys(smart.bool_signals(), False)
                    values.update({agent.signal("evidence"): True, agent.signal("safe"): True})
                    values.update(unsafe)
                    if _true_under(net.transitions[tid].guard, values, {place}):
                        found = True
                        break
            if not found:
                governance.passed = False
                governance.witnesses.append(f"{agent.place(key)}: no unsafety-enabled exit to {agent.place('R')}")
    checks.append(governance)

    # (c) every exit from P_R requires external authorization
    absorbing = CheckResult("regulated-absorbing", True)
    for agent in smart.agents:
        p_r = agent.place("R")
        for tid in net.transition_ids():
            if net.pre(tid).get(p_r, 0) >= 1:
                if _guard_satisfiable(net.transitions[tid].guard, {agent.signal("ext_auth"): False}):
                    absorbing.passed = False
                    absorbing.witnesses.append(f"{tid}: can exit {p_r} without {agent.signal('ext_auth')}")
    checks.append(absorbing)

    # (d) escalation and governance transitions are strong with finite beta
    timing = CheckResult("strong-deadlines", True)
    for agent in smart.agents:
        for key in ("t_SM", "t_SR", "t_MA", "t_MR", "t_AS", "t_AR"):
            record = net.transitions.get(agent.switch(key))
            if record is None:
                timing.passed = False
                timing.witnesses.append(f"missing transition {agent.switch(key)}")
                continue
            if record.timing != STRONG or record.beta == INF:
                timing.passed = False
                timing.witnesses.append(
                    f"{record.id}: needs strong finite timing, has {record.timing} [{record.alpha}, {record.beta}]"
                )
    checks.append(timing)

    # (e) mode switches conserve the mode token
    conserve = CheckResult("mode-token-flow", True)
    for agent in smart.agents:
        agent_modes = set(agent.mode_places.values())
        for tid in agent.mode_switches.values():
            if tid not in net.transitions:
                continue
            consumed = sum(w for p, w in net.pre(tid).items() if p in agent_modes)
            produced = sum(w for p, w in net.post(tid).items() if p in agent_modes)
            if (consumed, produced) != (1, 1):
                conserve.passed = False
                conserve.witnesses.append(f"{tid}: consumes {consumed}, produces {produced} mode tokens")
    checks.append(conserve)

    return SmartStructureReport(checks)
