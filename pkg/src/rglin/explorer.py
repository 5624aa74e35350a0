"""Bounded exhaustive interleaving exploration and the correlation experiment."""

from __future__ import annotations

import gc
import os
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from . import hwqueue, treiber
from .core import (
    HALTED,
    RETURNED,
    SystemState,
    Trace,
    apply,
    enabled_transitions,
    initial_state,
    replay_schedule,
)
from .linearise import History, LinWitness, is_linearisable, project_history
from .relations import ProcessVerdicts, RelationSpec, verdicts_for

STRUCTURES = ("treiber", "treiber-unguarded", "treiber-aba", "hwq")
OPS = {
    "treiber": ("push", "pop"),
    "treiber-unguarded": ("push", "pop"),
    "treiber-aba": ("push", "pop"),
    "hwq": ("enq", "deq"),
}

DEFAULT_TRACE_CAP = 200_000
DEFAULT_MAX_STEPS = 64
MAX_PROCESSES = 4


class TraceCapExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"exploration exceeded the trace cap of {cap} traces")
        self.cap = cap


def trace_cap() -> int:
    return int(os.environ.get("RGLIN_TRACE_CAP", DEFAULT_TRACE_CAP))


@dataclass(frozen=True)
class Scenario:
    """A structure, its initial contents, and one operation list per process."""

    structure: str
    initial: tuple[str, ...] = ()
    processes: tuple[tuple[tuple[str, str | None], ...], ...] = ()
    max_steps: int = DEFAULT_MAX_STEPS
    spin_rounds: int = hwqueue.DEFAULT_SPIN_ROUNDS
    mode: str | None = None
    capacity: int = hwqueue.DEFAULT_CAPACITY
    alphabet: tuple[str, ...] | None = None
    schedule: tuple[int, ...] | None = None
    name: str = ""

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.max_steps <= 0 or self.spin_rounds <= 0:
            raise ValueError("bounds must be positive")
        if len(self.processes) > MAX_PROCESSES:
            raise ValueError(f"at most {MAX_PROCESSES} processes are supported")
        letters = set(self.values)
        for pid, ops in enumerate(self.processes):
            if not ops:
                raise ValueError(f"process {pid} has no operations")
            for op, arg in ops:
                if op not in OPS[self.structure]:
                    raise ValueError(f"process {pid}: {self.structure} has no operation {op!r}")
                takes_arg = op in ("push", "enq")
                if takes_arg and arg not in letters:
                    raise ValueError(f"process {pid}: {op} needs a value from {sorted(letters)}")
                if not takes_arg and arg is not None:
                    raise ValueError(f"process {pid}: {op} takes no argument")
        bad = [v for v in self.initial if v not in letters]
        if bad:
            raise ValueError(f"initial values {bad} outside the alphabet")
        if self.structure == "hwq" and len(self.initial) > self.capacity:
            raise ValueError("initial queue longer than the capacity")
        if self.structure.startswith("treiber") and len(self.initial) > treiber.DEFAULT_DEPTH:
            raise ValueError(f"initial stack deeper than {treiber.DEFAULT_DEPTH}")

    @property
    def values(self) -> tuple[str, ...]:
        if self.alphabet is not None:
            return self.alphabet
        if self.structure == "hwq":
            return hwqueue.DEFAULT_ALPHABET
        return treiber.DEFAULT_ALPHABET

    @property
    def store_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return treiber.REUSE if self.structure == "treiber-aba" else treiber.FRESH

    def model(self):
        if self.structure == "hwq":
            return hwqueue.HWQueueModel(self.capacity, self.spin_rounds)
        return treiber.TreiberModel(self.structure != "treiber-unguarded", self.store_mode)

    def initial_state(self) -> SystemState:
        model = self.model()
        if self.structure == "hwq":
            shared = hwqueue.initial(self.initial, self.capacity)
        else:
            shared = treiber.initial(self.initial, self.store_mode)
        return initial_state(model, shared, self.processes)

    @property
    def spec(self):
        return self.model().spec


def _end_status(state: SystemState, bounded: bool) -> str:
    if bounded:
        return "truncated"
    done = all(
        p.status == HALTED or (p.status == RETURNED and not p.has_next_op) for p in state.procs
    )
    return "complete" if done else "truncated"


def iter_traces(sc: Scenario, cap: int | None = None) -> Iterator[Trace]:
    """Depth-first enumeration of maximal traces, in schedule order.

    A branch ends when no process can move, when ``max_steps`` is reached,
    or when it revisits a state already on the branch (status ``cycle``).
    """
    cap = trace_cap() if cap is None else cap
    init = sc.initial_state()
    model = init.model
    count = 0

    def emit(steps, status):
        nonlocal count
        count += 1
        if count > cap:
            raise TraceCapExceeded(cap)
        return Trace(init, tuple(steps), status, f"t{count - 1}")

    def canonical(state):
        cache = state.__dict__
        if "_canonical" not in cache:
            cache["_canonical"] = model.canonical(state)
        return cache["_canonical"]

    # States on the current branch, bucketed by a coarse key that equal
    # canonical states always share; the full key is computed only on a hit.
    on_branch: dict = {}

    def revisits(state, coarse) -> bool:
        bucket = on_branch.get(coarse)
        return bool(bucket) and any(canonical(state) == canonical(s) for s in bucket)

    steps: list = []
    successors = enabled_transitions(init)
    if not successors:
        yield emit(steps, _end_status(init, False))
        return
    on_branch[_coarse(init)] = [init]
    stack = [(init, iter(successors), None)]
    while stack:
        state, pending, key = stack[-1]
        transition = next(pending, None)
        if transition is None:
            stack.pop()
            if key is not None:
                on_branch[key].pop()
                steps.pop()
            continue
        step = apply(state, transition.pid, transition)
        post = step.post
        coarse = _coarse(post)
        steps.append(step)
        if revisits(post, coarse):
            yield emit(steps, "cycle")
            steps.pop()
            continue
        successors = enabled_transitions(post)
        if not successors or len(steps) >= sc.max_steps:
            yield emit(steps, _end_status(post, bool(successors)))
            steps.pop()
            continue
        on_branch.setdefault(coarse, []).append(post)
        stack.append((post, iter(successors), coarse))


def _coarse(state: SystemState):
    return state.abstract, tuple((p.opno, p.pc, p.status) for p in state.procs)


@contextmanager
def _collector_paused():
    # Traces share structure but never form reference cycles; letting the
    # cyclic collector rescan a growing list of them is pure overhead.
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def explore(sc: Scenario, cap: int | None = None) -> list[Trace]:
    with _collector_paused():
        return list(iter_traces(sc, cap))


def reachable_states(sc: Scenario) -> list[SystemState]:
    """Every state some explored trace passes through, each canonical state once.

    Cheaper than walking all traces when only the state set matters (for
    invariant and transitivity sweeps).  A state is expanded again only when
    reached at a smaller depth, so the step bound is honoured exactly.
    """
    init = sc.initial_state()
    model = init.model
    depth_of = {model.canonical(init): 0}
    found = [init]
    stack = [(init, 0)]
    while stack:
        state, depth = stack.pop()
        if depth >= sc.max_steps:
            continue
        for transition in enabled_transitions(state):
            post = apply(state, transition.pid, transition).post
            key = model.canonical(post)
            seen = depth_of.get(key)
            if seen is not None and seen <= depth + 1:
                continue
            if seen is None:
                found.append(post)
            depth_of[key] = depth + 1
            stack.append((post, depth + 1))
    return found


def replay(sc: Scenario, schedule: Sequence[int] | None = None) -> Trace:
    """The trace that follows ``schedule`` (the scenario's own by default)."""
    if schedule is None:
        schedule = sc.schedule or ()
    init = sc.initial_state()
    steps = replay_schedule(init, schedule)
    final = steps[-1].post if steps else init
    bounded = len(steps) >= sc.max_steps
    status = _end_status(final, bounded) if not enabled_transitions(final) or bounded else "partial"
    return Trace(init, tuple(steps), status, "replay")


# -- correlation ---------------------------------------------------------------


@dataclass(frozen=True)
class Row:
    trace_id: str
    schedule: tuple[int, ...]
    status: str
    linearisable: bool
    witness: LinWitness | None
    processes: tuple[ProcessVerdicts, ...]

    @property
    def guarantees_hold(self) -> bool:
        return all(p.guarantee.holds for p in self.processes)

    @property
    def relies_hold(self) -> bool:
        return all(p.rely.holds for p in self.processes)


@dataclass
class CorrelationReport:
    rows: list[Row] = field(default_factory=list)
    traces: dict[str, Trace] = field(default_factory=dict)

    @property
    def table(self) -> Counter:
        """Counts keyed by ``(linearisable, all guarantees hold)``."""
        return Counter((r.linearisable, r.guarantees_hold) for r in self.rows)

    @property
    def counterexamples(self) -> list[str]:
        """Traces that are not linearisable although every guarantee holds."""
        return [r.trace_id for r in self.rows if not r.linearisable and r.guarantees_hold]

    @property
    def rely_violations(self) -> int:
        return sum(not r.relies_hold for r in self.rows)

    def summary(self) -> dict:
        t = self.table
        return {
            "traces": len(self.rows),
            "lin_and_guar": t[(True, True)],
            "lin_and_violation": t[(True, False)],
            "nonlin_and_guar": t[(False, True)],
            "nonlin_and_violation": t[(False, False)],
            "rely_violations": self.rely_violations,
            "truncated": sum(r.status != "complete" for r in self.rows),
        }


class _LinCache:
    """Many interleavings share one history; decide each history once."""

    def __init__(self, spec, alphabet):
        self.spec = spec
        self.alphabet = alphabet
        self.memo: dict[History, tuple] = {}

    def __call__(self, history: History):
        if history not in self.memo:
            self.memo[history] = is_linearisable(history, self.spec, self.alphabet)
        return self.memo[history]


def correlate(
    traces: Iterable[Trace],
    guarantees: Sequence[RelationSpec] | None = None,
    relies: Sequence[RelationSpec] | None = None,
    spec=None,
    alphabet: Sequence[str] = (),
    keep_traces: bool = True,
) -> CorrelationReport:
    """Run the linearisability oracle and the rely/guarantee checker on every trace.

    Nothing is asserted about the outcome: the report tabulates
    linearisability against "every guarantee held" and lists the traces in
    the cell (not linearisable, all guarantees hold) verbatim.
    """
    report = CorrelationReport()
    lin = None
    for trace in traces:
        if lin is None:
            lin = _LinCache(spec or trace.init.model.spec, tuple(alphabet))
        ok, witness = lin(_normalise(project_history(trace)))
        procs = tuple(verdicts_for(trace, guarantees, relies))
        report.rows.append(Row(trace.id, trace.schedule, trace.status, ok, witness, procs))
        if keep_traces:
            report.traces[trace.id] = trace
    return report


def _normalise(history: History) -> History:
    """Renumber event positions densely so equal histories compare equal."""
    positions = sorted({ev.position for ev in history.events})
    rank = {p: i - 1 if positions[0] < 0 else i for i, p in enumerate(positions)}
    return History(
        tuple(replace(ev, position=rank[ev.position]) for ev in history.events),
        history.initial,
        history.final,
    )


# -- ABA search ------------------------------------------------------------------


@dataclass(frozen=True)
class AbaHit:
    trace: Trace
    pid: int
    read_step: int  # the step where the process last read head
    cas_step: int
    before: tuple  # abstract stack just after that read
    at_cas: tuple  # abstract stack just before the CAS


def aba_hits(traces: Iterable[Trace]) -> Iterator[AbaHit]:
    """Successful CASes whose expected head id hides an abstract change."""
    for trace in traces:
        last_read: dict[int, int] = {}
        for k, step in enumerate(trace.steps):
            if step.label == "read":
                last_read[step.pid] = k
            elif step.label == "cas" and step.post.proc(step.pid).get("cas_ok"):
                r = last_read.get(step.pid)
                if r is None:
                    continue
                seen = trace.steps[r].post.abstract
                now = step.pre.abstract
                if seen != now:
                    yield AbaHit(trace, step.pid, r, k, seen, now)


def aba_search(sc: Scenario, cap: int | None = None) -> AbaHit | None:
    """First explored trace with an undetected change, or ``None``."""
    return next(aba_hits(iter_traces(sc, cap)), None)
