"""Static structural analysis and bounded explicit-state exploration.

The incidence matrix and P-invariant checks use exact integer
arithmetic. The explorer enumerates, tick by tick, every assignment of
the chosen environment signals (within a per-tick flip budget), runs the
kernel's in-instant firing cascade, and deduplicates states on
(marking, timer residuals, derived clocks, signal vector, tick). Derived
timeout signals are computed from residence clocks internally and are
not part of the environment alphabet.

Formula verdicts are computed over the reached graph: safety (a
condition never coincides with a class of firings), bounded response and
reach (a place is marked within a deadline along every path where the
premise persists; paths where the environment retracts the premise are
excluded), and never-while (no premise-persistent path from given source
places ever marks a forbidden place). A horizon too short to decide an
obligation yields "inconclusive", never a silent pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .builder import SmartNet
from .guards import (
    GuardExpr,
    HeldFor,
    Marked,
    Sig,
    UndeclaredSignal,
    eval_with_assignment,
    held_terms,
    place_names,
    signal_names,
)
from .kernel import (
    DEFAULT_ZENO_LIMIT,
    FiringPolicy,
    KernelState,
    ZenoViolation,
    _due_transition,
    fire,
    refresh_timers,
)
from .net import INF, Marking, Net, STRONG

# --- incidence matrix and P-invariants ---------------------------------------


@dataclass
class IncidenceMatrix:
    """C[p][t] = w(t, p) - w(p, t), exact integers."""

    places: list[str]
    transitions: list[str]
    entries: dict[str, dict[str, int]]

    def entry(self, place: str, transition: str) -> int:
        return self.entries[place].get(transition, 0)

    def column(self, transition: str) -> dict[str, int]:
        return {p: self.entries[p][transition] for p in self.places if transition in self.entries[p]}


def incidence_matrix(net: Net) -> IncidenceMatrix:
    entries: dict[str, dict[str, int]] = {p: {} for p in net.places}
    for tid in net.transition_ids():
        for place, weight in net.pre(tid).items():
            entries[place][tid] = entries[place].get(tid, 0) - weight
        for place, weight in net.post(tid).items():
            entries[place][tid] = entries[place].get(tid, 0) + weight
    return IncidenceMatrix(list(net.places), net.transition_ids(), entries)


def check_p_invariant(matrix: IncidenceMatrix, y: Mapping[str, int]) -> bool:
    """True iff y^T C is the zero vector."""
    unknown = set(y) - set(matrix.places)
    if unknown:
        raise ValueError(f"invariant vector names unknown places {sorted(unknown)}")
    for tid in matrix.transitions:
        total = sum(weight * matrix.entry(place, tid) for place, weight in y.items())
        if total != 0:
            return False
    return True


def mode_indicator(smart: SmartNet) -> dict[str, int]:
    """Weight 1 on every mode place, 0 elsewhere."""
    return {p: 1 for p in smart.mode_place_ids}


@dataclass
class SafetyReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def structural_output_safety(smart: SmartNet) -> SafetyReport:
    """Every output transition must consume from its agent's P_S (weight
    >= 1) and from no other mode place."""
    report = SafetyReport()
    mode_places = set(smart.mode_place_ids)
    for agent in smart.agents:
        stable = agent.place("S")
        for tid in agent.outputs:
            pre = smart.net.pre(tid)
            if pre.get(stable, 0) < 1:
                report.violations.append(f"{tid}: {stable} not a preplace with weight >= 1")
            for place in sorted(set(pre) & (mode_places - {stable})):
                report.violations.append(f"{tid}: mode place {place} is a preplace")
    return report


# --- exploration --------------------------------------------------------------

BRANCH_EARLIEST = "earliest-only"
BRANCH_ALL = "all"

WANT_DRIVER = "want_output"


@dataclass
class ExplorationConfig:
    horizon: int
    alphabet: list[str] = field(default_factory=list)
    flip_budget: int | None = None  # None: any subset of the alphabet may flip per tick
    weak_branching: str = BRANCH_EARLIEST
    state_cap: int = 1_000_000
    zeno_limit: int = DEFAULT_ZENO_LIMIT
    fixed_signals: dict[str, bool | float] = field(default_factory=dict)


class _VectorSignals:
    """Constant-in-time signal view over a mutable value map, letting the
    kernel run inside a single tick of the exploration."""

    def __init__(self, values: dict[str, bool | float]):
        self.values = values

    def value_at(self, name: str, time: int):
        try:
            return self.values[name]
        except KeyError:
            raise UndeclaredSignal(f"signal {name!r} is not declared") from None

    def next_change_after(self, time: int):
        return None

    def change_points(self, names, start, end):
        return []


@dataclass(frozen=True)
class StateKey:
    """Canonical state identity: marking, capped timer elapse per enabled
    transition, per-agent residence clocks, and held-for run lengths."""

    marking: tuple[tuple[str, int], ...]
    timers: tuple[tuple[str, int], ...]
    residence: tuple[tuple[str, int], ...]
    held_runs: tuple[int, ...]


@dataclass
class EvolveResult:
    key: StateKey
    firings: tuple[str, ...]
    touched: frozenset[str]
    violations: tuple[str, ...]
    output_breaches: tuple[str, ...]  # outputs fired from a state without the stable token


@dataclass
class Violation:
    tick: int
    state: tuple[int, int]  # (state id, vector)
    description: str


class ReachGraph:
    """Layered reachability structure with a memoized per-tick transition
    function. States are (marking/timer key, signal vector, tick); the
    stored edge relation is the quotient map key x vector -> key, which
    every concrete edge instantiates."""

    def __init__(self, explorer: "_Explorer"):
        self._explorer = explorer
        self.layers: list[dict[int, set[int]]] = []  # tick -> key id -> vectors
        self.parents: dict[tuple[int, int, int], tuple[int, int]] = {}
        self.violations: list[Violation] = []
        self.incomplete = False
        self.state_count = 0

    @property
    def horizon(self) -> int:
        return self._explorer.cfg.horizon

    @property
    def config(self) -> ExplorationConfig:
        return self._explorer.cfg

    def key_of(self, key_id: int) -> StateKey:
        return self._explorer.key_table[key_id]

    def vector_signals(self, vector: int) -> dict[str, bool]:
        return self._explorer.vector_to_signals(vector)

    def states(self) -> Iterable[tuple[int, int, int]]:
        for tick, layer in enumerate(self.layers):
            for key_id, vectors in layer.items():
                for vector in vectors:
                    yield tick, key_id, vector

    def marking_of(self, key_id: int) -> Marking:
        return dict(self.key_of(key_id).marking)

    def successor(self, key_id: int, vector: int, tick: int) -> list[EvolveResult]:
        return self._explorer.evolve(key_id, vector, tick)

    def witness_path(self, tick: int, key_id: int, vector: int) -> list[dict]:
        """Replayable path from the initial state to the given state:
        one record per tick with the signal assignment and the firings."""
        chain: list[tuple[int, int, int]] = []
        node = (tick, key_id, vector)
        while node[0] >= 0:
            chain.append(node)
            parent = self.parents.get(node)
            if parent is None:
                break
            node = (node[0] - 1, parent[0], parent[1])
        chain.reverse()
        path = []
        for t, kid, vec in chain:
            results = self._explorer.evolve_from_parent(t, kid, vec, self.parents.get((t, kid, vec)))
            path.append(
                {
                    "tick": t,
                    "signals": self.vector_to_named(vec),
                    "firings": list(results),
                }
            )
        return path

    def vector_to_named(self, vector: int) -> dict[str, bool]:
        return self._explorer.vector_to_signals(vector)

    def export_lines(self) -> Iterable[str]:
        """Line-oriented dump: one state line per reachable state, one edge
        line per quotient edge."""
        for tick, key_id, vector in self.states():
            key = self.key_of(key_id)
            marking = ",".join(f"{p}:{c}" for p, c in key.marking if c)
            timers = ",".join(f"{t}:{e}" for t, e in key.timers)
            signals = ",".join(
                name for name, value in sorted(self.vector_to_named(vector).items()) if value
            )
            yield f"state {tick} {key_id} {vector} marking=[{marking}] timers=[{timers}] signals=[{signals}]"
        for (key_id, vector, tick_cap), results in sorted(self._explorer.memo.items()):
            for result in results:
                target = self._explorer.key_ids[result.key]
                label = ";".join(result.firings)
                yield f"edge {key_id} {vector} -> {target} [{label}] cap={tick_cap}"


class _Explorer:
    def __init__(self, subject: Net | SmartNet, cfg: ExplorationConfig):
        self.cfg = cfg
        if isinstance(subject, SmartNet):
            self.smart: SmartNet | None = subject
            base_net = subject.net
            declared = set(subject.bool_signals()) | set(subject.real_signals())
        else:
            self.smart = None
            base_net = subject
            declared = {
                name
                for tid in base_net.transition_ids()
                for name in signal_names(base_net.transitions[tid].guard)
            }
        self.net, self.held_specs = self._strip_held(base_net)
        self.deposit_driver = WANT_DRIVER in cfg.alphabet and self.smart is not None
        # one driver bit per alphabet entry; an unnamespaced name drives the
        # per-agent namespaced signals of every agent in lockstep
        self.drivers: list[tuple[str, list[str]]] = []
        for name in cfg.alphabet:
            if name == WANT_DRIVER:
                continue
            if name in declared:
                self.drivers.append((name, [name]))
                continue
            targets = []
            if self.smart is not None:
                for agent in self.smart.agents:
                    if agent.signal(name) in declared:
                        targets.append(agent.signal(name))
            if not targets:
                raise ValueError(f"alphabet signal {name!r} is not declared by the net")
            self.drivers.append((name, targets))
        if cfg.weak_branching not in (BRANCH_EARLIEST, BRANCH_ALL):
            raise ValueError(f"unknown weak branching {cfg.weak_branching!r}")
        if cfg.horizon < 0:
            raise ValueError("horizon must be >= 0")
        self.base_values = self._base_values(declared)
        self.policy = FiringPolicy("earliest", zeno_limit=cfg.zeno_limit)

        self.key_ids: dict[StateKey, int] = {}
        self.key_table: list[StateKey] = []
        self.memo: dict[tuple[int, int, int], list[EvolveResult]] = {}
        self.max_held_delta = max((h.duration for h, _ in self.held_specs), default=0)

        if self.smart is not None:
            self.residence_specs = [
                (agent.suffix, agent.mode_places, agent.config.budget_m, agent.config.budget_a)
                for agent in self.smart.agents
            ]
        else:
            self.residence_specs = []

    # -- net transformation ----------------------------------------------

    def _strip_held(self, net: Net) -> tuple[Net, list[tuple[HeldFor, str]]]:
        """Replace held_for terms with virtual boolean signals whose truth
        the explorer maintains as exact run-length counters."""
        from .guards import check_no_nested_held

        specs: list[tuple[HeldFor, str]] = []
        mapping: dict[HeldFor, str] = {}
        records = []
        for tid in net.transition_ids():
            record = net.transitions[tid]
            check_no_nested_held(record.guard)
            terms = held_terms(record.guard)
            if not terms:
                continue
            for term in terms:
                if place_names(term.child):
                    raise ValueError(
                        f"{tid}: held_for over marking atoms is not explorable"
                    )
                if term not in mapping:
                    name = f"held.{len(specs)}"
                    mapping[term] = name
                    specs.append((term, name))
            records.append(record.with_guard(self._replace_held(record.guard, mapping)))
        return (net.with_transitions(records) if records else net), specs

    def _replace_held(self, expr: GuardExpr, mapping: dict[HeldFor, str]) -> GuardExpr:
        from .guards import And, Not, Or

        if isinstance(expr, HeldFor):
            return Sig(mapping[expr])
        if isinstance(expr, Not):
            return Not(self._replace_held(expr.child, mapping))
        if isinstance(expr, And):
            return And(tuple(self._replace_held(c, mapping) for c in expr.children))
        if isinstance(expr, Or):
            return Or(tuple(self._replace_held(c, mapping) for c in expr.children))
        return expr

    def _base_values(self, declared: set[str]) -> dict[str, bool | float]:
        values: dict[str, bool | float] = {}
        if self.smart is not None:
            for name in self.smart.bool_signals():
                values[name] = False
            for name in self.smart.real_signals():
                values[name] = 0.0
            values.update(self.smart.default_initial_signals())
        else:
            for name in declared:
                values[name] = False
        for name, value in self.cfg.fixed_signals.items():
            values[name] = value
        return values

    # -- state identity ----------------------------------------------------

    def intern(self, key: StateKey) -> int:
        key_id = self.key_ids.get(key)
        if key_id is None:
            key_id = len(self.key_table)
            self.key_ids[key] = key_id
            self.key_table.append(key)
        return key_id

    def initial_key(self) -> StateKey:
        marking = self.net.marking0()
        return StateKey(
            marking=tuple(sorted(marking.items())),
            timers=(),
            residence=tuple((s, 0) for s, _, _, _ in self.residence_specs),
            held_runs=tuple(-1 for _ in self.held_specs),
        )

    @staticmethod
    def _current_mode(marking: Mapping[str, int], mode_places: dict[str, str]) -> str | None:
        for key, place in mode_places.items():
            if marking.get(place, 0) >= 1:
                return key
        return None

    def vector_to_signals(self, vector: int) -> dict[str, bool]:
        """Driver-level view of a vector (for display and witnesses)."""
        return {name: bool(vector >> i & 1) for i, (name, _) in enumerate(self.drivers)}

    def vector_values(self, vector: int) -> dict[str, bool]:
        """Signal-level assignment a vector induces."""
        values: dict[str, bool] = {}
        for i, (_, targets) in enumerate(self.drivers):
            bit = bool(vector >> i & 1)
            for target in targets:
                values[target] = bit
        return values

    def signals_to_vector(self, values: Mapping[str, bool]) -> int:
        vector = 0
        for i, (_, targets) in enumerate(self.drivers):
            if values.get(targets[0], False):
                vector |= 1 << i
        return vector

    def branch_vectors(self, vector: int) -> list[int]:
        if self.cfg.flip_budget is None:
            return list(range(1 << len(self.drivers)))
        vectors = {vector}
        frontier = {vector}
        for _ in range(self.cfg.flip_budget):
            frontier = {
                v ^ (1 << bit) for v in frontier for bit in range(len(self.drivers))
            } - vectors
            vectors |= frontier
        return sorted(vectors)

    # -- one tick ------------------------------------------------------------

    def evolve(self, key_id: int, vector: int, tick: int) -> list[EvolveResult]:
        tick_cap = min(tick, self.max_held_delta)
        memo_key = (key_id, vector, tick_cap)
        cached = self.memo.get(memo_key)
        if cached is not None:
            return cached
        results = self._evolve_uncached(self.key_table[key_id], vector, tick_cap)
        self.memo[memo_key] = results
        return results

    def _evolve_uncached(self, key: StateKey, vector: int, tick_cap: int) -> list[EvolveResult]:
        values = dict(self.base_values)
        values.update(self.vector_values(vector))

        # advance held-for run lengths under the new assignment
        held_runs = []
        for (term, name), prev in zip(self.held_specs, key.held_runs):
            body_true = self._eval_static(term.child, values)
            if body_true:
                run = 0 if prev < 0 else min(prev + 1, term.duration)
            else:
                run = -1
            held_runs.append(run)
            values[name] = body_true and run >= term.duration and tick_cap >= term.duration

        marking = dict(key.marking)
        residence = {suffix: elapsed for suffix, elapsed in key.residence}
        if self.deposit_driver and self.smart is not None:
            # at most one pending output attempt per agent
            for agent in self.smart.agents:
                if marking.get(agent.want_place, 0) == 0:
                    marking[agent.want_place] = 1

        state = KernelState(marking=marking, now=0)
        state.marking_history = [(0, dict(marking))]
        state.timers = {tid: -elapsed for tid, elapsed in key.timers}
        sigma = _VectorSignals(values)

        if self.cfg.weak_branching == BRANCH_ALL:
            outcomes = self._cascade_all(state, sigma, values, residence)
        else:
            outcomes = [self._cascade_earliest(state, sigma, values, residence)]

        results = []
        for end_state, end_residence, firings, touched in outcomes:
            results.append(self._finish(end_state, end_residence, held_runs, firings, touched))
        return results

    def _set_derived(self, values: dict, marking: Marking, residence: dict[str, int]) -> None:
        for suffix, mode_places, budget_m, budget_a in self.residence_specs:
            mode = self._current_mode(marking, mode_places)
            elapsed = residence.get(suffix, 0)
            values["timeout_M" + suffix] = mode == "M" and elapsed >= budget_m
            values["timeout_A" + suffix] = mode == "A" and elapsed >= budget_a

    def _track_residence(self, residence: dict[str, int], before: Marking, after: Marking) -> None:
        for suffix, mode_places, _, _ in self.residence_specs:
            if self._current_mode(before, mode_places) != self._current_mode(after, mode_places):
                residence[suffix] = 0

    def _cascade_earliest(self, state: KernelState, sigma: _VectorSignals, values: dict, residence: dict[str, int]):
        firings: list[str] = []
        touched: set[str] = set()
        while True:
            self._set_derived(values, state.marking, residence)
            refresh_timers(self.net, state, sigma)
            due = _due_transition(self.net, state, sigma, self.policy)
            if due is None:
                break
            before = dict(state.marking)
            state, event = fire(self.net, state, due, sigma)
            if state.events_at_now > self.policy.zeno_limit:
                raise ZenoViolation(f"cascade exceeded {self.policy.zeno_limit} firings in one tick")
            firings.append(due)
            touched.update(p for p, c in state.marking.items() if c > 0)
            self._track_residence(residence, before, state.marking)
        return state, residence, tuple(firings), frozenset(touched)

    def _cascade_all(self, state: KernelState, sigma: _VectorSignals, values: dict, residence: dict[str, int]):
        """Branch over every admissible firing choice within the instant."""
        outcomes = []
        seen: set[tuple] = set()

        def snapshot(st: KernelState, res: dict[str, int]) -> tuple:
            return (tuple(sorted(st.marking.items())), tuple(sorted(st.timers.items())), tuple(sorted(res.items())))

        def recurse(st: KernelState, res: dict[str, int], firings: tuple[str, ...], touched: frozenset[str]):
            vals = sigma.values
            self._set_derived(vals, st.marking, res)
            refresh_timers(self.net, st, sigma)
            choices = []
            forced_pending = False
            for tid, since in sorted(st.timers.items()):
                record = self.net.transitions[tid]
                elapsed = st.now - since
                if elapsed < record.alpha or elapsed > record.beta:
                    continue
                if record.timing == STRONG and elapsed >= record.beta:
                    forced_pending = True
                choices.append(tid)
            if not forced_pending:
                outcomes.append((st.clone(), dict(res), firings, touched))
            for tid in choices:
                nxt = st.clone()
                nxt_res = dict(res)
                before = dict(nxt.marking)
                nxt, _ = fire(self.net, nxt, tid, sigma)
                if nxt.events_at_now > self.policy.zeno_limit:
                    raise ZenoViolation("cascade branching exceeded the zeno limit")
                self._track_residence(nxt_res, before, nxt.marking)
                mark = snapshot(nxt, nxt_res)
                if mark in seen:
                    continue
                seen.add(mark)
                recurse(nxt, nxt_res, firings + (tid,), touched | {p for p, c in nxt.marking.items() if c > 0})

        recurse(state, residence, (), frozenset(p for p, c in state.marking.items() if c > 0))
        return outcomes

    def _finish(self, state: KernelState, residence: dict[str, int], held_runs: list[int],
                firings: tuple[str, ...], touched: frozenset[str]) -> EvolveResult:
        violations = []
        breaches = []
        if self.smart is not None:
            for agent in self.smart.agents:
                total = sum(state.marking.get(p, 0) for p in agent.mode_places.values())
                if total != 1:
                    violations.append(
                        f"mode-token sum {total} for agent {agent.agent_id or 'default'}"
                    )
            output_ids = set(self.smart.output_transitions)
            for index, tid in enumerate(firings):
                if tid in output_ids:
                    agent = next(a for a in self.smart.agents if tid in a.outputs)
                    pre = state.marking_history[index][1]
                    if pre.get(agent.place("S"), 0) < 1:
                        breaches.append(tid)

        next_residence = tuple(
            (suffix, min(residence.get(suffix, 0) + 1, max(budget_m, budget_a)))
            for suffix, _, budget_m, budget_a in self.residence_specs
        )
        next_timers = []
        for tid, since in sorted(state.timers.items()):
            record = self.net.transitions[tid]
            if record.beta == INF:
                cap = record.alpha
            elif record.timing == STRONG:
                cap = int(record.beta)
            else:
                cap = int(record.beta) + 1  # one past beta: the window has expired
            next_timers.append((tid, min(-since + 1, cap)))
        key = StateKey(
            marking=tuple(sorted(state.marking.items())),
            timers=tuple(next_timers),
            residence=next_residence,
            held_runs=tuple(held_runs),
        )
        return EvolveResult(key, firings, touched, tuple(violations), tuple(breaches))

    def _eval_static(self, expr: GuardExpr, values: Mapping[str, bool | float]) -> bool:
        def assign(atom) -> bool:
            if isinstance(atom, Sig):
                if atom.name not in values:
                    raise UndeclaredSignal(atom.name)
                return bool(values[atom.name])
            if isinstance(atom, Marked):
                raise UndeclaredSignal("marking atom in signal-only context")
            value = float(values.get(atom.name, 0.0))
            return value >= atom.threshold if atom.op == ">=" else value <= atom.threshold

        return eval_with_assignment(expr, assign)

    def evolve_from_parent(self, tick, key_id, vector, parent) -> tuple[str, ...]:
        if parent is None:
            source = self.intern(self.initial_key())
        else:
            source = parent[0]
        for result in self.evolve(source, vector, tick):
            if self.key_ids.get(result.key) == key_id:
                return result.firings
        return ()


def explore(subject: Net | SmartNet, cfg: ExplorationConfig) -> ReachGraph:
    """Breadth-first bounded exploration over environment assignments."""
    explorer = _Explorer(subject, cfg)
    graph = ReachGraph(explorer)

    init_id = explorer.intern(explorer.initial_key())
    init_vector = explorer.signals_to_vector(
        {k: bool(v) for k, v in explorer.base_values.items() if isinstance(v, bool)}
    )

    frontier: dict[int, set[int]] = {}
    layer0: dict[int, set[int]] = {}
    for vector in explorer.branch_vectors(init_vector):
        for result in explorer.evolve(init_id, vector, 0):
            target = explorer.intern(result.key)
            layer0.setdefault(target, set()).add(vector)
            node = (0, target, vector)
            if node not in graph.parents:
                graph.parents[node] = (init_id, init_vector)
                for violation in result.violations:
                    graph.violations.append(Violation(0, (target, vector), violation))
                for breach in result.output_breaches:
                    graph.violations.append(
                        Violation(0, (target, vector), f"output {breach} without stable token")
                    )
    graph.layers.append(layer0)
    graph.state_count = sum(len(v) for v in layer0.values())
    frontier = layer0

    for tick in range(1, cfg.horizon + 1):
        layer: dict[int, set[int]] = {}
        all_vectors = explorer.branch_vectors(0) if cfg.flip_budget is None else None
        for key_id in sorted(frontier):
            if all_vectors is not None:
                pairs = [(next(iter(frontier[key_id])), v) for v in all_vectors]
            else:
                pairs = [
                    (prev, v)
                    for prev in sorted(frontier[key_id])
                    for v in explorer.branch_vectors(prev)
                ]
            for prev_vector, vector in pairs:
                for result in explorer.evolve(key_id, vector, tick):
                    target = explorer.intern(result.key)
                    bucket = layer.setdefault(target, set())
                    if vector in bucket and (tick, target, vector) in graph.parents:
                        continue
                    bucket.add(vector)
                    node = (tick, target, vector)
                    if node not in graph.parents:
                        graph.parents[node] = (key_id, prev_vector)
                        for violation in result.violations:
                            graph.violations.append(Violation(tick, (target, vector), violation))
                        for breach in result.output_breaches:
                            graph.violations.append(
                                Violation(tick, (target, vector), f"output {breach} without stable token")
                            )
        graph.layers.append(layer)
        graph.state_count += sum(len(v) for v in layer.values())
        if graph.state_count > cfg.state_cap:
            graph.incomplete = True
            break
        frontier = layer

    return graph


def replay_witness(graph: ReachGraph, witness: list[dict]) -> list[tuple[int, list[str]]]:
    """Replay a witness path through the production run loop and return the
    firings it produces per tick. A sound witness reproduces its recorded
    firings event for event."""
    from .scenario import Scenario, run as run_scenario

    explorer = graph._explorer
    if explorer.smart is None:
        raise ValueError("witness replay needs a SMART-annotated net")
    script: list[tuple[int, str, bool]] = []
    for step in witness:
        for driver, value in sorted(step["signals"].items()):
            targets = dict(explorer.drivers).get(driver, [driver])
            for target in targets:
                script.append((step["tick"], target, value))
    horizon = max((step["tick"] for step in witness), default=0)
    scenario = Scenario(
        name="witness-replay",
        smart=explorer.smart,
        horizon=horizon,
        policy="earliest",
        script=script,
        quiescence=False,
    )
    trace, _ = run_scenario(scenario)
    by_tick: dict[int, list[str]] = {}
    for event in trace.firings():
        by_tick.setdefault(event.time, []).append(event.name)
    return [(step["tick"], by_tick.get(step["tick"], [])) for step in witness]


# --- formulas ----------------------------------------------------------------

HOLDS = "holds"
VIOLATED = "violated"
VACUOUS = "vacuous"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Formula:
    kind: str  # "safety" | "bounded-response" | "reach" | "never-while"
    condition: GuardExpr
    place: str | None = None
    within: int | None = None
    forbidden: tuple[str, ...] = ()  # transition ids or role classes for safety
    from_places: tuple[str, ...] = ()
    name: str = ""

    def label(self) -> str:
        return self.name or f"{self.kind}"


@dataclass
class FormulaVerdict:
    formula: Formula
    status: str
    witness: list | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (HOLDS, VACUOUS)


def _condition_holds(graph: ReachGraph, condition: GuardExpr, key_id: int, vector: int) -> bool:
    explorer = graph._explorer
    values = dict(explorer.base_values)
    values.update(explorer.vector_values(vector))
    key = explorer.key_table[key_id]
    marking = dict(key.marking)
    residence = {suffix: elapsed for suffix, elapsed in key.residence}
    explorer._set_derived(values, marking, residence)

    def assign(atom) -> bool:
        if isinstance(atom, Marked):
            return marking.get(atom.place, 0) >= atom.count
        if isinstance(atom, Sig):
            if atom.name not in values:
                raise UndeclaredSignal(atom.name)
            return bool(values[atom.name])
        if isinstance(atom, HeldFor):
            raise ValueError("held_for in formula conditions is not supported")
        value = float(values.get(atom.name, 0.0))
        return value >= atom.threshold if atom.op == ">=" else value <= atom.threshold

    return eval_with_assignment(condition, assign)


def _forbidden_ids(graph: ReachGraph, formula: Formula) -> set[str]:
    explorer = graph._explorer
    ids: set[str] = set()
    for entry in formula.forbidden:
        if entry in explorer.net.transitions:
            ids.add(entry)
        elif explorer.smart is not None and entry == "output":
            ids.update(explorer.smart.output_transitions)
        else:
            ids.update(
                tid for tid, rec in explorer.net.transitions.items() if rec.role == entry
            )
    return ids


def check_formula(graph: ReachGraph, formula: Formula) -> FormulaVerdict:
    if formula.kind == "safety":
        return _check_safety(graph, formula)
    if formula.kind in ("bounded-response", "reach"):
        return _check_bounded(graph, formula)
    if formula.kind == "never-while":
        return _check_never_while(graph, formula)
    raise ValueError(f"unknown formula kind {formula.kind!r}")


def _check_safety(graph: ReachGraph, formula: Formula) -> FormulaVerdict:
    """No firing of a forbidden transition at an instant where the
    condition holds. The condition is read against the signal assignment
    governing the instant of the firing and the marking at its entry."""
    explorer = graph._explorer
    forbidden = _forbidden_ids(graph, formula)
    premise_seen = False

    def edge_violation(source_id: int, vector: int, tick: int):
        if not _condition_holds(graph, formula.condition, source_id, vector):
            return None
        for result in explorer.evolve(source_id, vector, tick):
            hit = sorted(set(result.firings) & forbidden)
            if hit:
                return hit[0], result
        return None

    init_id = explorer.intern(explorer.initial_key())
    edges: list[tuple[int, int, int, int | None]] = []
    for vector in explorer.branch_vectors(0):
        edges.append((init_id, vector, 0, None))
    for tick, layer in enumerate(graph.layers[:-1] if graph.layers else []):
        for key_id, vectors in layer.items():
            if graph.config.flip_budget is None:
                for vector in explorer.branch_vectors(0):
                    edges.append((key_id, vector, tick + 1, None))
            else:
                for prev in vectors:
                    for vector in explorer.branch_vectors(prev):
                        edges.append((key_id, vector, tick + 1, prev))

    for source_id, vector, tick, _ in edges:
        hit = edge_violation(source_id, vector, tick)
        if hit is not None:
            tid, result = hit
            target = explorer.intern(result.key)
            witness = graph.witness_path(tick, target, vector) or [
                {"tick": tick, "signals": graph.vector_to_named(vector), "firings": list(result.firings)}
            ]
            return FormulaVerdict(formula, VIOLATED, witness, f"{tid} fired under the condition")

    for tick, key_id, vector in graph.states():
        if _condition_holds(graph, formula.condition, key_id, vector):
            premise_seen = True
            break
    if not premise_seen:
        return FormulaVerdict(formula, VACUOUS, detail="condition never held")
    return FormulaVerdict(formula, HOLDS)


def _check_bounded(graph: ReachGraph, formula: Formula) -> FormulaVerdict:
    if formula.place is None or formula.within is None:
        raise ValueError(f"{formula.kind} needs place and within")
    explorer = graph._explorer
    delta = formula.within
    memo: dict[tuple[int, int, int], str] = {}

    def search(key_id: int, depth_left: int, ticks_left: int, tick: int) -> str:
        """HOLDS if along every condition-persistent extension the place is
        marked within depth_left ticks."""
        if dict(explorer.key_table[key_id].marking).get(formula.place, 0) >= 1:
            return HOLDS
        if depth_left == 0:
            return VIOLATED
        if ticks_left == 0:
            return INCONCLUSIVE
        memo_key = (key_id, depth_left, min(ticks_left, depth_left))
        cached = memo.get(memo_key)
        if cached is not None:
            return cached
        outcome = HOLDS
        found_persistent = False
        for vector in explorer.branch_vectors(0):
            for result in explorer.evolve(key_id, vector, tick + 1):
                target = explorer.intern(result.key)
                if not _condition_holds(graph, formula.condition, target, vector):
                    continue
                found_persistent = True
                if formula.place in result.touched:
                    continue
                sub = search(target, depth_left - 1, ticks_left - 1, tick + 1)
                if sub == VIOLATED:
                    outcome = VIOLATED
                    break
                if sub == INCONCLUSIVE:
                    outcome = INCONCLUSIVE
            if outcome == VIOLATED:
                break
        if not found_persistent:
            outcome = HOLDS
        memo[memo_key] = outcome
        return outcome

    def failing_suffix(key_id: int, depth_left: int, ticks_left: int, tick: int) -> list[dict]:
        """Greedy descent along a persistent branch whose verdict is
        VIOLATED, for counterexample replay."""
        steps: list[dict] = []
        while depth_left > 0 and ticks_left > 0:
            advanced = False
            for vector in explorer.branch_vectors(0):
                for result in explorer.evolve(key_id, vector, tick + 1):
                    target = explorer.intern(result.key)
                    if not _condition_holds(graph, formula.condition, target, vector):
                        continue
                    if formula.place in result.touched:
                        continue
                    if dict(result.key.marking).get(formula.place, 0) >= 1:
                        continue
                    sub = search(target, depth_left - 1, ticks_left - 1, tick + 1)
                    if sub == VIOLATED or depth_left == 1:
                        steps.append(
                            {
                                "tick": tick + 1,
                                "signals": graph.vector_to_named(vector),
                                "firings": list(result.firings),
                            }
                        )
                        key_id, tick = target, tick + 1
                        depth_left -= 1
                        ticks_left -= 1
                        advanced = True
                        break
                if advanced:
                    break
            if not advanced:
                break
        return steps

    # Dynamics are translation-invariant beyond the held-for window, so an
    # anchor configuration is judged at its occurrence with the most
    # remaining horizon; tail occurrences of the same configuration share
    # that verdict instead of reporting a spurious inconclusive.
    anchors: dict[tuple[int, int], tuple[int, int, int]] = {}
    for tick, key_id, vector in graph.states():
        if not _condition_holds(graph, formula.condition, key_id, vector):
            continue
        group = (key_id, min(tick, explorer.max_held_delta))
        slack = graph.horizon - tick
        best = anchors.get(group)
        if best is None or slack > best[0]:
            anchors[group] = (slack, tick, vector)

    if not anchors:
        return FormulaVerdict(formula, VACUOUS, detail="premise never held")
    worst = HOLDS
    for (key_id, _), (slack, tick, vector) in sorted(anchors.items()):
        verdict = search(key_id, delta, slack, tick)
        if verdict == VIOLATED:
            witness = graph.witness_path(tick, key_id, vector)
            witness += failing_suffix(key_id, delta, slack, tick)
            return FormulaVerdict(
                formula,
                VIOLATED,
                witness,
                f"{formula.place} not reached within {delta} ticks of a persistent premise at tick {tick}",
            )
        if verdict == INCONCLUSIVE:
            worst = INCONCLUSIVE
    if worst == INCONCLUSIVE:
        return FormulaVerdict(formula, INCONCLUSIVE, detail="horizon ends inside an open obligation")
    return FormulaVerdict(formula, HOLDS)


def _check_never_while(graph: ReachGraph, formula: Formula) -> FormulaVerdict:
    if formula.place is None:
        raise ValueError("never-while needs a place")
    explorer = graph._explorer
    sources = formula.from_places or ()
    memo: dict[tuple[int, int], bool] = {}

    def reaches(key_id: int, ticks_left: int, tick: int) -> bool:
        if ticks_left == 0:
            return False
        memo_key = (key_id, ticks_left)
        cached = memo.get(memo_key)
        if cached is not None:
            return cached
        found = False
        for vector in explorer.branch_vectors(0):
            for result in explorer.evolve(key_id, vector, tick + 1):
                target = explorer.intern(result.key)
                if not _condition_holds(graph, formula.condition, target, vector):
                    continue
                if formula.place in result.touched or dict(result.key.marking).get(formula.place, 0) >= 1:
                    found = True
                    break
                if reaches(target, ticks_left - 1, tick + 1):
                    found = True
                    break
            if found:
                break
        memo[memo_key] = found
        return found

    anchors: dict[tuple[int, int], tuple[int, int, int]] = {}
    for tick, key_id, vector in graph.states():
        if not _condition_holds(graph, formula.condition, key_id, vector):
            continue
        marking = graph.marking_of(key_id)
        if sources and not any(marking.get(p, 0) >= 1 for p in sources):
            continue
        if marking.get(formula.place, 0) >= 1:
            continue
        group = (key_id, min(tick, explorer.max_held_delta))
        slack = graph.horizon - tick
        best = anchors.get(group)
        if best is None or slack > best[0]:
            anchors[group] = (slack, tick, vector)

    if not anchors:
        return FormulaVerdict(formula, VACUOUS, detail="no anchored states")
    for (key_id, _), (slack, tick, vector) in sorted(anchors.items()):
        if reaches(key_id, slack, tick):
            return FormulaVerdict(
                formula,
                VIOLATED,
                graph.witness_path(tick, key_id, vector),
                f"{formula.place} reached under a persistent condition from tick {tick}",
            )
    return FormulaVerdict(formula, HOLDS)
