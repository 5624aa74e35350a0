"""Small-step execution framework shared by the stack and queue models.

A model describes a shared structure plus a small program per operation.
Every process sits at a program location (``pc``); the model maps
``(shared, process)`` to the single atomic transition the process can take
next, or ``None`` when the process is blocked or finished.  All state is
immutable, so states, steps and traces can be shared freely between
explorations and workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Hashable, Iterable, Optional, Protocol, Sequence

# A value is a one-letter symbol from the configured alphabet; ``None`` is null.
Value = Optional[str]

IDLE = "idle"
INVOKED = "invoked"
RETURNED = "returned"
HALTED = "halted"

INVOKE = "invoke"


class DisabledTransition(ValueError):
    """Raised when a caller applies a transition that is not enabled."""


def but(obj, **changes):
    """``dataclasses.replace`` without re-running ``__init__`` (hot path)."""
    new = object.__new__(type(obj))
    new.__dict__.update(obj.__dict__)
    new.__dict__.update(changes)
    return new


@dataclass(frozen=True)
class ProcessState:
    """Local state of one process.

    ``ops`` is the process's whole program: the operations it performs in
    order, each an ``(op, arg)`` pair.  ``opno`` selects the current one.
    ``flag`` and ``set_ind`` are ghost variables maintained by the model's
    instrumentation, never by the modelled code.
    """

    pid: int
    ops: tuple[tuple[str, Value], ...]
    opno: int = 0
    pc: str = ""
    locals: tuple[tuple[str, Any], ...] = ()
    flag: bool = False
    set_ind: bool = False
    status: str = INVOKED
    result: Value = None

    @property
    def op(self) -> str:
        return self.ops[self.opno][0]

    @property
    def arg(self) -> Value:
        return self.ops[self.opno][1]

    @property
    def has_next_op(self) -> bool:
        return self.opno + 1 < len(self.ops)

    @property
    def active(self) -> bool:
        return self.status == INVOKED

    def get(self, name: str, default: Any = None) -> Any:
        for key, value in self.locals:
            if key == name:
                return value
        return default

    def evolve(self, pc: str | None = None, **updates: Any) -> ProcessState:
        """Copy with a new pc and updated locals (other fields untouched)."""
        merged = dict(self.locals)
        merged.update(updates)
        return but(
            self,
            pc=self.pc if pc is None else pc,
            locals=tuple(sorted(merged.items())),
        )

    def finish(self, result: Value = None) -> ProcessState:
        return but(self, status=RETURNED, result=result, pc="done")


@dataclass(frozen=True)
class SystemState:
    shared: Any
    procs: tuple[ProcessState, ...]
    model: Model = field(compare=False, repr=False, hash=False)

    def proc(self, pid: int) -> ProcessState:
        return self.procs[pid]

    def with_proc(self, proc: ProcessState, shared: Any = None) -> SystemState:
        procs = list(self.procs)
        procs[proc.pid] = proc
        new = object.__new__(SystemState)
        new.__dict__.update(
            shared=self.shared if shared is None else shared,
            procs=tuple(procs),
            model=self.model,
        )
        return new

    @cached_property
    def abstract(self) -> Any:
        """Abstract sequential state of the shared structure (memoised)."""
        return self.model.abstraction(self.shared)


@dataclass(frozen=True)
class Transition:
    pid: int
    label: str


@dataclass(frozen=True)
class Step:
    pre: SystemState
    post: SystemState
    pid: int
    label: str


@dataclass(frozen=True)
class Trace:
    """A finite run from ``init``; ``status`` records why it ended."""

    init: SystemState
    steps: tuple[Step, ...] = ()
    status: str = "complete"
    id: str = ""

    @property
    def schedule(self) -> tuple[int, ...]:
        return tuple(step.pid for step in self.steps)

    @property
    def states(self) -> list[SystemState]:
        return [self.init] + [step.post for step in self.steps]

    @property
    def final(self) -> SystemState:
        return self.steps[-1].post if self.steps else self.init

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class Run:
    """Maximal contiguous block of steps, seen from the viewpoint of ``pid``."""

    pid: int
    first: int
    last: int
    kind: str  # "program" or "environment"

    @property
    def indices(self) -> range:
        return range(self.first, self.last + 1)


class Model(Protocol):
    """What a structure model provides to the generic machinery."""

    name: str

    def program_step(
        self, shared: Any, proc: ProcessState
    ) -> tuple[str, Any, ProcessState] | None:
        """The next atomic transition of ``proc``: ``(label, shared', proc')``."""

    def instrument(
        self, pre: SystemState, post: SystemState, pid: int, label: str
    ) -> ProcessState:
        """Return the acting process of ``post`` with ghost variables updated."""

    def begin(self, proc: ProcessState) -> ProcessState:
        """Reset ``proc`` to the first location of its current operation."""

    def abstraction(self, shared: Any) -> Any: ...

    def canonical(self, state: SystemState) -> Hashable: ...


def _invoke_next(proc: ProcessState, model: Model) -> ProcessState:
    fresh = but(
        proc,
        opno=proc.opno + 1,
        locals=(),
        flag=False,
        set_ind=False,
        status=INVOKED,
        result=None,
    )
    return model.begin(fresh)


def _transition_of(state: SystemState, proc: ProcessState):
    # Effects are memoised on the state: exploration asks for them twice.
    cache = state.__dict__.setdefault("_effects", {})
    if proc.pid in cache:
        return cache[proc.pid]
    if proc.status == RETURNED and proc.has_next_op:
        found = INVOKE, None
    elif proc.status != INVOKED:
        found = None
    else:
        effect = state.model.program_step(state.shared, proc)
        found = None if effect is None else (effect[0], effect)
    cache[proc.pid] = found
    return found


def enabled_transitions(state: SystemState) -> list[Transition]:
    """All transitions enabled at ``state``, ordered by pid."""
    out = []
    for proc in state.procs:
        found = _transition_of(state, proc)
        if found is not None:
            out.append(Transition(proc.pid, found[0]))
    return out


def apply(state: SystemState, pid: int, transition: Transition | None = None) -> Step:
    """Execute the enabled transition of ``pid``; reject anything else."""
    proc = state.proc(pid)
    found = _transition_of(state, proc)
    if found is None:
        raise DisabledTransition(f"process {pid} has no enabled transition")
    label, effect = found
    if transition is not None and (transition.pid, transition.label) != (pid, label):
        raise DisabledTransition(
            f"transition {transition.label!r} of process {transition.pid} is not "
            f"enabled (process {pid} is at {label!r})"
        )
    if effect is None:
        post = state.with_proc(_invoke_next(proc, state.model))
        return Step(state, post, pid, label)
    _, shared, new_proc = effect
    raw = state.with_proc(new_proc, shared)
    post = raw.with_proc(state.model.instrument(state, raw, pid, label))
    if "abstract" in raw.__dict__:
        post.__dict__["abstract"] = raw.__dict__["abstract"]
    return Step(state, post, pid, label)


def initial_state(
    model: Model, shared: Any, programs: Sequence[Sequence[tuple[str, Value]]]
) -> SystemState:
    procs = tuple(
        model.begin(ProcessState(pid=pid, ops=tuple(map(tuple, ops))))
        for pid, ops in enumerate(programs)
    )
    return SystemState(shared, procs, model)


def runs_of(trace: Trace, pid: int) -> list[Run]:
    """Partition the step indices of ``trace`` into program/environment runs."""
    bounds: list[list] = []
    for k, step in enumerate(trace.steps):
        kind = "program" if step.pid == pid else "environment"
        if bounds and bounds[-1][2] == kind:
            bounds[-1][1] = k
        else:
            bounds.append([k, k, kind])
    return [Run(pid, first, last, kind) for first, last, kind in bounds]


def check_chaining(trace: Trace) -> None:
    previous = trace.init
    for k, step in enumerate(trace.steps):
        if step.pre != previous:
            raise AssertionError(f"step {k} does not start where step {k - 1} ended")
        previous = step.post


def check_frame(step: Step) -> None:
    for before, after in zip(step.pre.procs, step.post.procs):
        if before.pid != step.pid and before != after:
            raise AssertionError(
                f"step by {step.pid} altered the local state of process {before.pid}"
            )


def replay_schedule(init: SystemState, schedule: Iterable[int]) -> list[Step]:
    """Follow ``schedule`` from ``init``; errors name the first bad position."""
    steps = []
    state = init
    for position, pid in enumerate(schedule):
        if not 0 <= pid < len(state.procs):
            raise DisabledTransition(f"schedule position {position}: no process {pid}")
        try:
            step = apply(state, pid)
        except DisabledTransition:
            raise DisabledTransition(
                f"schedule position {position}: process {pid} is not enabled"
            ) from None
        steps.append(step)
        state = step.post
    return steps
