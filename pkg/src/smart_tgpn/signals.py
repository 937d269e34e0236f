"""Timestamped runtime-signal histories.

A SignalState holds the piecewise-constant history of every declared
boolean and real signal. Histories start at time 0 and change-points are
strictly increasing per signal; a query at time ``t`` returns the value
set by the latest change-point at or before ``t``. Histories may extend
past "now" (a scenario script is preloaded), which is how the kernel
learns when the environment next changes.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Union

SignalValue = Union[bool, float]

BOOL = "bool"
REAL = "real"


class SignalError(ValueError):
    """Bad signal declaration, value, or timestamp."""


class UndeclaredSignal(SignalError):
    """A guard or recording referenced a signal that was never declared."""


@dataclass
class SignalState:
    """Append-only signal histories keyed by signal name.

    ``declarations`` maps name -> "bool" | "real". Every declared signal
    gets an entry at time 0 (defaulting to False / 0.0).
    """

    declarations: dict[str, str] = field(default_factory=dict)
    histories: dict[str, list[tuple[int, SignalValue]]] = field(default_factory=dict)

    @classmethod
    def declare(
        cls,
        booleans: Iterable[str] = (),
        reals: Iterable[str] = (),
        initial: dict[str, SignalValue] | None = None,
    ) -> "SignalState":
        sigma = cls()
        for name in booleans:
            sigma.declarations[name] = BOOL
            sigma.histories[name] = [(0, False)]
        for name in reals:
            sigma.declarations[name] = REAL
            sigma.histories[name] = [(0, 0.0)]
        for name, value in (initial or {}).items():
            if name not in sigma.declarations:
                raise UndeclaredSignal(f"initial value for undeclared signal {name!r}")
            sigma.histories[name] = [(0, sigma._coerce(name, value))]
        return sigma

    def _coerce(self, name: str, value: SignalValue) -> SignalValue:
        kind = self.declarations.get(name)
        if kind is None:
            raise UndeclaredSignal(f"signal {name!r} is not declared")
        if kind == BOOL:
            if isinstance(value, bool) or value in (0, 1):
                return bool(value)
            raise SignalError(f"boolean signal {name!r} given non-boolean value {value!r}")
        if isinstance(value, bool):
            raise SignalError(f"real signal {name!r} given boolean value {value!r}")
        return float(value)

    def is_declared(self, name: str) -> bool:
        return name in self.declarations

    def kind(self, name: str) -> str:
        if name not in self.declarations:
            raise UndeclaredSignal(f"signal {name!r} is not declared")
        return self.declarations[name]

    def value_at(self, name: str, time: int) -> SignalValue:
        history = self.histories.get(name)
        if history is None:
            raise UndeclaredSignal(f"signal {name!r} is not declared")
        if time < 0:
            raise SignalError(f"query at negative time {time}")
        idx = bisect.bisect_right(history, (time, float("inf"))) - 1
        return history[idx][1]

    def last_change(self, name: str) -> int:
        history = self.histories.get(name)
        if history is None:
            raise UndeclaredSignal(f"signal {name!r} is not declared")
        return history[-1][0]

    def record(self, name: str, value: SignalValue, time: int) -> "SignalState":
        """Append a change-point. Timestamps must strictly increase per signal."""
        value = self._coerce(name, value)
        history = self.histories[name]
        last_time, last_value = history[-1]
        if time == last_time and value == last_value:
            return self
        if time < last_time or (time == last_time and time != 0):
            raise SignalError(
                f"out-of-order timestamp {time} for {name!r} (last change at {last_time})"
            )
        if time == 0:
            history[0] = (0, value)
        elif value != last_value:
            history.append((time, value))
        return self

    def next_change_after(self, time: int) -> int | None:
        """Earliest change-point strictly after ``time`` across all signals."""
        best: int | None = None
        for history in self.histories.values():
            idx = bisect.bisect_right(history, (time, float("inf")))
            if idx < len(history):
                t = history[idx][0]
                if best is None or t < best:
                    best = t
        return best

    def change_points(self, names: Iterable[str], start: int, end: int) -> list[int]:
        """Change-points of the given signals within (start, end], ascending."""
        points: set[int] = set()
        for name in names:
            history = self.histories.get(name)
            if history is None:
                raise UndeclaredSignal(f"signal {name!r} is not declared")
            for t, _ in history:
                if start < t <= end:
                    points.add(t)
        return sorted(points)

    def clone(self) -> "SignalState":
        copy = SignalState(dict(self.declarations), {})
        copy.histories = {name: list(h) for name, h in self.histories.items()}
        return copy


def record_signal(sigma: SignalState, name: str, value: SignalValue, time: int) -> SignalState:
    """Functional alias for :meth:`SignalState.record`."""
    return sigma.record(name, value, time)
