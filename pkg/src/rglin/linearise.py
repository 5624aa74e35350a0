"""Brute-force linearisability checking of histories projected from traces.

Besides the invocation/response events, a history may carry the abstract
state observed when the trace ended.  A linearisation must then also leave
the sequential specification in that state; this is what rules out a
"lost push" whose results alone look sequential.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Any, Sequence

from .core import INVOKED, Trace, Value

INVOCATION = "invocation"
RESPONSE = "response"

# Before any step: where initially invoked operations start.
START = -1

NULL = object()


@dataclass(frozen=True)
class Event:
    kind: str
    pid: int
    op: str
    arg: Value = None
    result: Value = None
    position: int = START  # index of the step that produced the event


@dataclass(frozen=True)
class Operation:
    """One invocation matched with its response (``None`` when pending)."""

    pid: int
    op: str
    arg: Value
    invoked: int
    responded: int | None = None
    result: Value = None

    @property
    def pending(self) -> bool:
        return self.responded is None

    def precedes(self, other: Operation) -> bool:
        return self.responded is not None and self.responded < other.invoked

    def __str__(self) -> str:
        call = f"{self.op}({self.arg})" if self.arg is not None else f"{self.op}()"
        if self.op in ("pop", "deq"):
            shown = "null" if self.result is None else self.result
            return f"{self.op}→{shown}"
        return call


@dataclass(frozen=True)
class History:
    events: tuple[Event, ...]
    initial: Any
    final: Any = None  # observed abstract end state; None leaves it unconstrained

    def operations(self) -> list[Operation]:
        open_: dict[int, Operation] = {}
        done: list[Operation] = []
        for ev in self.events:
            if ev.kind == INVOCATION:
                if ev.pid in open_:
                    raise ValueError(f"process {ev.pid} invoked twice without a response")
                open_[ev.pid] = Operation(ev.pid, ev.op, ev.arg, ev.position)
            else:
                op = open_.pop(ev.pid, None)
                if op is None or op.op != ev.op:
                    raise ValueError(f"response by {ev.pid} matches no invocation")
                done.append(replace(op, responded=ev.position, result=ev.result))
        ops = done + list(open_.values())
        ops.sort(key=lambda o: (o.invoked, o.pid))
        return ops

    @property
    def complete(self) -> bool:
        return all(not op.pending for op in self.operations())


@dataclass(frozen=True)
class LinWitness:
    order: tuple[Operation, ...]
    states: tuple[Any, ...]

    def __str__(self) -> str:
        return ";".join(str(op) for op in self.order)


def final_state_of(witness: LinWitness) -> Any:
    return witness.states[-1]


def project_history(trace: Trace) -> History:
    """Invocation/response events in step order, plus the final abstract state."""
    events = [
        Event(INVOCATION, p.pid, p.op, p.arg, position=START)
        for p in trace.init.procs
        if p.status == INVOKED
    ]
    for k, step in enumerate(trace.steps):
        before, after = step.pre.proc(step.pid), step.post.proc(step.pid)
        if before.status == INVOKED and after.status != INVOKED and after.opno == before.opno:
            if after.status == "returned":
                events.append(Event(RESPONSE, before.pid, before.op, before.arg, after.result, k))
        if after.status == INVOKED and (before.status != INVOKED or after.opno != before.opno):
            events.append(Event(INVOCATION, after.pid, after.op, after.arg, position=k))
    final = trace.final.abstract
    if not isinstance(final, tuple):
        final = None
    return History(tuple(events), trace.init.abstract, final)


def completions(history: History, spec, alphabet: Sequence[str]) -> list[History]:
    """Every way of dropping or answering each pending invocation.

    Appended responses come after every existing event, in pid order.
    """
    pending = [op for op in history.operations() if op.pending]
    end = max((ev.position for ev in history.events), default=START) + 1
    choices = [
        [None, *(NULL if r is None else r for r in spec.completion_results(op.op, alphabet))]
        for op in pending
    ]
    out = []
    for picks in itertools.product(*choices):
        dropped = {(op.pid, op.invoked) for op, pick in zip(pending, picks) if pick is None}
        events = [
            ev for ev in history.events
            if not (ev.kind == INVOCATION and (ev.pid, ev.position) in dropped)
        ]
        # "pop returns null" and "drop the pop" are different completions,
        # so null answers are marked with a sentinel in the choice list.
        events += [
            Event(RESPONSE, op.pid, op.op, op.arg, None if pick is NULL else pick, end)
            for op, pick in zip(pending, picks)
            if pick is not None
        ]
        out.append(History(tuple(events), history.initial, history.final))
    return out


def is_linearisable(history: History, spec, alphabet: Sequence[str] = ()):
    """Decide linearisability by exhaustive search; returns ``(ok, witness)``.

    Pending operations may be left out or linearised with whatever result
    the specification gives them (provided that result is one a completion
    could have chosen).  Candidates are tried in completion order, so the
    witness follows response order wherever that works.  Failed
    ``(done set, abstract state)`` pairs are memoised.
    """
    ops = history.operations()
    ops.sort(key=lambda o: (o.pending, o.responded if o.responded is not None else 0, o.pid))
    preds = [frozenset(j for j, other in enumerate(ops) if other.precedes(op)) for op in ops]
    required = frozenset(j for j, op in enumerate(ops) if not op.pending)
    failed: set = set()

    def search(done: frozenset, state, order: list, states: list):
        if required <= done and (history.final is None or state == history.final):
            return True
        key = (done, state)
        if key in failed:
            return False
        for j, op in enumerate(ops):
            if j in done or not preds[j] <= done:
                continue
            outcome = spec.apply(state, op.op, op.arg)
            if outcome is None:
                continue
            nxt, result = outcome
            if op.pending:
                if result not in spec.completion_results(op.op, alphabet or _letters(history)):
                    continue
                op = replace(op, result=result)
            elif result != op.result:
                continue
            order.append(op)
            states.append(nxt)
            if search(done | {j}, nxt, order, states):
                return True
            order.pop()
            states.pop()
        failed.add(key)
        return False

    order: list[Operation] = []
    states = [history.initial]
    if search(frozenset(), history.initial, order, states):
        return True, LinWitness(tuple(order), tuple(states))
    return False, None


def _letters(history: History) -> tuple:
    seen = set(history.initial or ())
    seen |= set(history.final or ())
    for ev in history.events:
        seen.update(v for v in (ev.arg, ev.result) if v is not None)
    return tuple(sorted(seen))


def replays(witness: LinWitness, history: History, spec) -> bool:
    """The witness respects real time and reproduces every result."""
    order = list(witness.order)
    for i, a in enumerate(order):
        for b in order[:i]:
            if a.precedes(b):
                return False
    completed = {(op.pid, op.invoked) for op in history.operations() if not op.pending}
    if not completed <= {(op.pid, op.invoked) for op in order}:
        return False
    state = history.initial
    for op, expected in zip(order, witness.states[1:]):
        outcome = spec.apply(state, op.op, op.arg)
        if outcome is None or outcome[1] != op.result or outcome[0] != expected:
            return False
        state = outcome[0]
    return history.final is None or state == history.final


def real_time_orders(history: History) -> int:
    """Number of orders of the completed operations consistent with real time.

    Counted without consulting the specification; for ``k`` mutually
    overlapping operations this is ``k!``.
    """
    ops = [op for op in history.operations() if not op.pending]
    count = 0
    for perm in itertools.permutations(ops):
        if all(not perm[j].precedes(perm[i]) for i in range(len(perm)) for j in range(i + 1, len(perm))):
            count += 1
    return count
