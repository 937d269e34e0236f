"""Execution kernel: enabling, firing, timers, and deadline enforcement.

Time is an integer tick count. Guards are re-evaluated only at event
boundaries (signal changes, firings, and held-for window completions);
signals are piecewise constant, so enabledness is constant between
boundaries and "continuously enabled" is decided exactly.

Each transition has a clock that runs while the transition is enabled
(structurally and by guard) and resets whenever it becomes enabled after
being disabled, or when it fires. A strong transition that stays enabled
must fire no later than its latest time beta; a change that disables it
at exactly the deadline instant takes effect first and cancels the
obligation.

One transition fires per event. When several are due at one instant the
tie is broken by priority class (governance > escalation > recovery
return > internal > output), then lexicographic id.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from .guards import EvalContext, eval_guard, next_held_flip
from .net import INF, Marking, Net, STRONG, UnknownTransition, apply_firing
from .signals import SignalState

DEFAULT_ZENO_LIMIT = 10_000

EARLIEST = "earliest"
LATEST = "latest"
RANDOM = "random"


class KernelError(RuntimeError):
    pass


class NotEnabled(KernelError):
    """Attempt to fire a transition that is not enabled (or outside its interval)."""


class ZenoViolation(KernelError):
    """More than the allowed number of events occurred at a single timestamp."""


class DeadlineViolation(KernelError):
    """A strong transition stayed enabled past beta: internal kernel bug."""


@dataclass(frozen=True)
class FiringEvent:
    time: int
    transition: str
    pre_marking: Marking
    post_marking: Marking


@dataclass(frozen=True)
class FiringPolicy:
    """How weak (and unforced strong) transitions choose a firing time
    within [alpha, beta]. ``random`` draws deterministically per
    (seed, transition, enabling time); an infinite beta is truncated to
    alpha + random_span for the draw."""

    kind: str = EARLIEST
    seed: int = 0
    zeno_limit: int = DEFAULT_ZENO_LIMIT
    random_span: int = 4

    def chosen_offset(self, tid: str, record, enabled_since: int) -> int | None:
        if self.kind == EARLIEST:
            return record.alpha
        if self.kind == LATEST:
            if record.beta == INF:
                return None
            return int(record.beta)
        if self.kind == RANDOM:
            hi = int(record.beta) if record.beta != INF else record.alpha + self.random_span
            rng = random.Random(f"{self.seed}:{tid}:{enabled_since}")
            return rng.randint(record.alpha, hi)
        raise ValueError(f"unknown firing policy {self.kind!r}")


@dataclass
class KernelState:
    """Marking, per-transition clocks, and the global tick counter.

    ``timers`` maps enabled transition ids to the tick at which they were
    last (re-)enabled. ``marking_history`` records post-firing markings so
    held-for guards over marking atoms can look back in time.
    """

    marking: Marking
    timers: dict[str, int] = field(default_factory=dict)
    now: int = 0
    marking_history: list[tuple[int, Marking]] = field(default_factory=list)
    events_at_now: int = 0

    @classmethod
    def initial(cls, net: Net) -> "KernelState":
        marking = net.marking0()
        return cls(marking=marking, marking_history=[(0, dict(marking))])

    def elapsed(self, tid: str) -> int | None:
        since = self.timers.get(tid)
        return None if since is None else self.now - since

    def clone(self) -> "KernelState":
        return KernelState(
            marking=dict(self.marking),
            timers=dict(self.timers),
            now=self.now,
            marking_history=list(self.marking_history),
            events_at_now=self.events_at_now,
        )

    def eval_context(self, sigma: SignalState) -> EvalContext:
        return EvalContext(sigma, self.marking, self.now, self.marking_history)


def struct_enabled(net: Net, marking: Marking, tid: str) -> bool:
    """True iff every input place holds at least the arc weight."""
    if tid not in net.transitions:
        raise UnknownTransition(tid)
    return all(marking.get(place, 0) >= weight for place, weight in net.pre(tid).items())


def enabled(net: Net, state: KernelState, sigma: SignalState, tid: str) -> bool:
    """Structural enabling conjoined with guard truth at the current instant."""
    if not struct_enabled(net, state.marking, tid):
        return False
    record = net.transitions[tid]
    return eval_guard(record.guard, sigma, state.marking, state.now, state.marking_history)


def refresh_timers(net: Net, state: KernelState, sigma: SignalState) -> None:
    """Reconcile clocks with current enabledness: start clocks for newly
    enabled transitions, drop clocks of disabled ones, keep the rest."""
    for tid in net.transition_ids():
        is_enabled = enabled(net, state, sigma, tid)
        if is_enabled and tid not in state.timers:
            state.timers[tid] = state.now
        elif not is_enabled and tid in state.timers:
            del state.timers[tid]
    for tid, since in state.timers.items():
        record = net.transitions[tid]
        if record.timing == STRONG and state.now - since > record.beta:
            raise DeadlineViolation(
                f"{tid} enabled since {since}, now {state.now}, beta {record.beta}"
            )


def fire(net: Net, state: KernelState, tid: str, sigma: SignalState) -> tuple[KernelState, FiringEvent]:
    """Fire one transition now. Requires enabledness and alpha <= clock;
    a strong transition past beta raises DeadlineViolation."""
    if not enabled(net, state, sigma, tid):
        raise NotEnabled(f"{tid} is not enabled at t={state.now}")
    if tid not in state.timers:
        refresh_timers(net, state, sigma)
    record = net.transitions[tid]
    elapsed = state.now - state.timers[tid]
    if elapsed < record.alpha:
        raise NotEnabled(f"{tid} fired at clock {elapsed} before alpha={record.alpha}")
    if elapsed > record.beta:
        if record.timing == STRONG:
            raise DeadlineViolation(f"{tid} fired at clock {elapsed} after beta={record.beta}")
        raise NotEnabled(f"{tid} fired at clock {elapsed} outside [{record.alpha}, {record.beta}]")

    pre_marking = dict(state.marking)
    state.marking = apply_firing(state.marking, net.pre(tid), net.post(tid))
    state.marking_history.append((state.now, dict(state.marking)))
    event = FiringEvent(state.now, tid, pre_marking, dict(state.marking))

    state.events_at_now += 1
    # the fired transition's own clock restarts if it is still enabled
    state.timers.pop(tid, None)
    refresh_timers(net, state, sigma)
    return state, event


def next_forced_deadline(
    net: Net, state: KernelState, sigma: SignalState
) -> tuple[int, list[str]] | None:
    """Earliest time at which a continuously enabled strong transition hits
    beta, with all transitions forced at that time. None if no strong
    transition is enabled."""
    refresh_timers(net, state, sigma)
    best: int | None = None
    forced: list[str] = []
    for tid in net.transition_ids():
        since = state.timers.get(tid)
        record = net.transitions[tid]
        if since is None or record.timing != STRONG:
            continue
        deadline = since + int(record.beta)
        if best is None or deadline < best:
            best, forced = deadline, [tid]
        elif deadline == best:
            forced.append(tid)
    if best is None:
        return None
    return best, forced


def _due_transition(net: Net, state: KernelState, sigma: SignalState, policy: FiringPolicy) -> str | None:
    """Highest-priority transition that may (or must) fire at the current
    instant under the policy."""
    best: tuple[int, str] | None = None
    for tid, since in state.timers.items():
        record = net.transitions[tid]
        elapsed = state.now - since
        if elapsed < record.alpha:
            continue
        if elapsed > record.beta:
            continue  # a weak window that has expired; strong ones fail refresh first
        forced = record.timing == STRONG and elapsed >= record.beta
        chosen = policy.chosen_offset(tid, record, since)
        voluntary = chosen is not None and elapsed >= chosen
        if forced or voluntary:
            key = (int(record.priority), tid)
            if best is None or key < best:
                best = key
    return best[1] if best else None


def _next_candidate(net: Net, state: KernelState, sigma: SignalState, policy: FiringPolicy) -> int | None:
    """Earliest future time at which anything can happen: a scripted signal
    change, a chosen or forced firing, or a held-for window completing."""
    candidates: list[int] = []
    change = sigma.next_change_after(state.now)
    if change is not None:
        candidates.append(change)
    ctx = state.eval_context(sigma)
    for tid in net.transition_ids():
        record = net.transitions[tid]
        since = state.timers.get(tid)
        if since is not None:
            if record.timing == STRONG:
                candidates.append(since + int(record.beta))
            chosen = policy.chosen_offset(tid, record, since)
            if chosen is not None:
                candidates.append(max(state.now, since + chosen))
        if struct_enabled(net, state.marking, tid):
            flip = next_held_flip(record.guard, ctx)
            if flip is not None:
                candidates.append(flip)
    future = [c for c in candidates if c > state.now]
    return min(future) if future else None


def advance_to_next_event(
    net: Net,
    state: KernelState,
    sigma: SignalState,
    policy: FiringPolicy,
    limit: int | None = None,
) -> tuple[KernelState, list[FiringEvent]]:
    """Advance to the next event not later than ``limit`` and process it.

    Fires at most one transition. If a transition is due at the current
    instant it fires without time passing. Otherwise time advances to the
    earliest candidate (signal change, chosen firing time, forced strong
    deadline, or guard flip); if that exceeds ``limit``, now is set to
    ``limit`` and nothing fires. Returns the (mutated) state and the
    firing events produced (empty for pure wake-ups).
    """
    refresh_timers(net, state, sigma)
    if state.events_at_now > policy.zeno_limit:
        raise ZenoViolation(f"{state.events_at_now} events at t={state.now}")

    due = _due_transition(net, state, sigma, policy)
    if due is not None:
        state, event = fire(net, state, due, sigma)
        if state.events_at_now > policy.zeno_limit:
            raise ZenoViolation(f"{state.events_at_now} events at t={state.now}")
        return state, [event]

    target = _next_candidate(net, state, sigma, policy)
    if target is None or (limit is not None and target >= limit):
        if limit is not None and limit > state.now:
            state.now = limit
            state.events_at_now = 0
            refresh_timers(net, state, sigma)
        return state, []

    state.now = target
    state.events_at_now = 0
    refresh_timers(net, state, sigma)
    due = _due_transition(net, state, sigma, policy)
    if due is None:
        return state, []
    state, event = fire(net, state, due, sigma)
    return state, [event]
