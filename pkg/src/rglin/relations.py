"""Rely and guarantee checking over traces.

A relation is a list of named clauses over *views*: the slice of a system
state that the relation talks about, taken from the viewpoint of one process
(its own flag, index, argument, ...).  Guarantees are checked on every
program step of a process and between the endpoints of every maximal run of
its program steps; relies likewise on environment steps and runs.  Steps and
runs never straddle two operations of the same process: a guarantee speaks
about one operation instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

from . import hwqueue, treiber
from .core import INVOKED, Step, SystemState, Trace, runs_of

HOLDS = "holds"
VIOLATED = "violated"

Clause = tuple[str, Callable[[Any, Any], bool]]


@dataclass(frozen=True)
class RelationSpec:
    name: str
    view: Callable[[SystemState, int], Any]
    clauses: tuple[Clause, ...]
    ops: frozenset[str] | None = None  # operations the relation constrains

    def failed_clause(self, pre_view, post_view) -> str | None:
        for label, holds in self.clauses:
            if not holds(pre_view, post_view):
                return label
        return None

    def holds(self, pre_view, post_view) -> bool:
        return self.failed_clause(pre_view, post_view) is None

    def view_of(self, state: SystemState, pid: int):
        # Views are memoised on the state: sibling traces share their prefixes.
        cache = state.__dict__.setdefault("_views", {})
        key = (self.view, pid)
        if key not in cache:
            cache[key] = self.view(state, pid)
        return cache[key]

    def between(self, pre: SystemState, post: SystemState, pid: int) -> str | None:
        """Failing clause for the state pair seen by ``pid``, or ``None``."""
        return self.failed_clause(self.view_of(pre, pid), self.view_of(post, pid))

    def across(self, step: Step, pid: int) -> str | None:
        """``between`` for a single step, memoised on the step."""
        cache = step.__dict__.setdefault("_clauses", {})
        key = (self.name, pid)
        if key not in cache:
            cache[key] = self.between(step.pre, step.post, pid)
        return cache[key]

    def applies_to(self, op: str) -> bool:
        return self.ops is None or op in self.ops


@dataclass(frozen=True)
class Witness:
    relation: str
    pid: int
    kind: str  # "step", "run", "triple" or "pair"
    first: int
    last: int
    pre: Any
    post: Any
    clause: str
    trace_id: str = ""
    middle: Any = None


@dataclass(frozen=True)
class Verdict:
    outcome: str
    witness: Witness | None = None

    @property
    def holds(self) -> bool:
        return self.outcome == HOLDS

    def __bool__(self) -> bool:
        return self.holds


HELD = Verdict(HOLDS)


def _identity_view(state, pid):
    return state


TRUE = RelationSpec("true", _identity_view, ())
IDENTITY = RelationSpec(
    "identity", lambda s, pid: (s.shared, s.procs[pid]), (("pre = post", lambda a, b: a == b),)
)

GUAR_POP1 = RelationSpec(
    "guar-pop1", treiber.stack_view, treiber.GUAR_POP1_CLAUSES, frozenset({"pop"})
)
GUAR_PUSH1 = RelationSpec(
    "guar-push1", treiber.stack_view, treiber.GUAR_PUSH1_CLAUSES, frozenset({"push"})
)
GUAR_DEQ1 = RelationSpec(
    "guar-deq1", hwqueue.queue_view, hwqueue.GUAR_DEQ1_CLAUSES, frozenset({"deq"})
)
GUAR_ENQ1 = RelationSpec(
    "guar-enq1", hwqueue.queue_view, hwqueue.GUAR_ENQ1_CLAUSES, frozenset({"enq"})
)
RELY1 = RelationSpec(
    "rely1", hwqueue.queue_view, hwqueue.RELY1_CLAUSES, frozenset({"enq", "deq"})
)

RELATIONS = {
    rel.name: rel for rel in (TRUE, GUAR_POP1, GUAR_PUSH1, GUAR_DEQ1, GUAR_ENQ1, RELY1)
}

# The guarantee each operation is checked against, and its rely.
GUARANTEE_FOR = {"pop": GUAR_POP1, "push": GUAR_PUSH1, "deq": GUAR_DEQ1, "enq": GUAR_ENQ1}
RELY_FOR = {"pop": TRUE, "push": TRUE, "deq": RELY1, "enq": RELY1}


def relation(name: str) -> RelationSpec:
    try:
        return RELATIONS[name]
    except KeyError:
        raise KeyError(
            f"unknown relation {name!r}; known: {', '.join(sorted(RELATIONS))}"
        ) from None


def _in_scope(trace: Trace, k: int, pid: int, rel: RelationSpec):
    """Operation instance of ``pid`` that step ``k`` falls inside, if in scope."""
    proc = trace.steps[k].pre.proc(pid)
    if proc.status != INVOKED or not rel.applies_to(proc.op):
        return None
    return proc.opno


def _segments(trace: Trace, pid: int, rel: RelationSpec, kind: str):
    """Maximal runs of ``kind`` split at operation boundaries of ``pid``."""
    for run in runs_of(trace, pid):
        if run.kind != kind:
            continue
        current: list[int] = []
        current_op = None
        for k in run.indices:
            op = _in_scope(trace, k, pid, rel)
            if current and op != current_op:
                yield current
                current = []
            if op is not None:
                current.append(k)
            current_op = op
        if current:
            yield current


def _check(trace: Trace, pid: int, rel: RelationSpec, kind: str) -> Verdict:
    if not 0 <= pid < len(trace.init.procs):
        raise ValueError(f"trace has no process {pid}")
    if not rel.clauses:
        return HELD
    for seg in _segments(trace, pid, rel, kind):
        for k in seg:
            step = trace.steps[k]
            clause = rel.across(step, pid)
            if clause is not None:
                return Verdict(
                    VIOLATED,
                    Witness(rel.name, pid, "step", k, k, step.pre, step.post, clause, trace.id),
                )
        pre, post = trace.steps[seg[0]].pre, trace.steps[seg[-1]].post
        clause = rel.between(pre, post, pid)
        if clause is not None:
            return Verdict(
                VIOLATED,
                Witness(rel.name, pid, "run", seg[0], seg[-1], pre, post, clause, trace.id),
            )
    return HELD


def check_guarantee(trace: Trace, pid: int, rel: RelationSpec) -> Verdict:
    """Check ``rel`` on every program step and program run of ``pid``."""
    return _check(trace, pid, rel, "program")


def check_rely(trace: Trace, pid: int, rel: RelationSpec) -> Verdict:
    """Check ``rel`` on every environment step and run observed by ``pid``."""
    return _check(trace, pid, rel, "environment")


def recheck(witness: Witness, rel: RelationSpec) -> str | None:
    """Re-evaluate a witness standalone; returns the failing clause again."""
    if witness.kind == "triple":
        return rel.failed_clause(witness.pre, witness.post)
    return rel.between(witness.pre, witness.post, witness.pid)


def check_transitive(rel: RelationSpec, views: Iterable) -> Verdict:
    """Exhaustive transitivity over every triple drawn from a set of views."""
    pool = list(dict.fromkeys(views))
    related = {
        a: [b for b in pool if rel.holds(a, b)] for a in pool
    }
    for a in pool:
        for b in related[a]:
            for c in related[b]:
                clause = rel.failed_clause(a, c)
                if clause is not None:
                    return Verdict(
                        VIOLATED, Witness(rel.name, -1, "triple", 0, 2, a, c, clause, middle=b)
                    )
    return HELD


def check_transitive_chained(rel: RelationSpec, chains: Iterable[Sequence]) -> Verdict:
    """Transitivity over ordered triples ``i < j < k`` taken along each chain.

    Chains are view sequences, typically one per operation instance per
    trace.  Results are memoised per view pair since chains repeat heavily.
    """
    memo: dict = {}

    def failed(a, b):
        key = (a, b)
        if key not in memo:
            memo[key] = rel.failed_clause(a, b)
        return memo[key]

    seen: set = set()
    for chain in chains:
        chain = [v for v, _ in itertools.groupby(chain)]
        for i, a in enumerate(chain):
            for j in range(i + 1, len(chain)):
                b = chain[j]
                if failed(a, b) is not None:
                    continue
                for c in chain[j + 1 :]:
                    if (a, b, c) in seen:
                        continue
                    seen.add((a, b, c))
                    if failed(b, c) is None and failed(a, c) is not None:
                        return Verdict(
                            VIOLATED,
                            Witness(rel.name, -1, "triple", 0, 2, a, c, failed(a, c), middle=b),
                        )
    return HELD


def operation_chains(traces: Iterable[Trace], rel: RelationSpec) -> Iterable[list]:
    """View sequences of every in-scope operation instance, one per trace."""
    for trace in traces:
        states = trace.states
        for pid in range(len(trace.init.procs)):
            chains: dict[int, list] = {}
            closed: set[int] = set()
            for state in states:
                proc = state.proc(pid)
                if proc.opno in closed or not rel.applies_to(proc.op):
                    continue
                if proc.status == INVOKED:
                    chains.setdefault(proc.opno, []).append(rel.view(state, pid))
                elif proc.opno in chains:
                    # the response state closes the operation
                    chains[proc.opno].append(rel.view(state, pid))
                    closed.add(proc.opno)
            yield from chains.values()


def check_compatibility(
    guar: RelationSpec,
    p: int,
    rely: RelationSpec,
    q: int,
    pairs: Iterable[tuple[SystemState, SystemState]],
) -> Verdict:
    """Every pair allowed by p's guarantee must satisfy q's rely."""
    for k, (a, b) in enumerate(pairs):
        if guar.between(a, b, p) is not None:
            continue
        observer = a.proc(q)
        if observer.status != INVOKED or not rely.applies_to(observer.op):
            continue
        clause = rely.between(a, b, q)
        if clause is not None:
            return Verdict(VIOLATED, Witness(rely.name, q, "pair", k, k, a, b, clause))
    return HELD


def program_pairs(traces: Iterable[Trace], pid: int):
    """(pre, post) of every step taken by ``pid`` while an operation is open."""
    for trace in traces:
        for step in trace.steps:
            if step.pid == pid and step.pre.proc(pid).status == INVOKED:
                yield step.pre, step.post


@dataclass(frozen=True)
class ProcessVerdicts:
    pid: int
    guarantee: Verdict
    rely: Verdict


def verdicts_for(
    trace: Trace,
    guarantees: Sequence[RelationSpec] | None = None,
    relies: Sequence[RelationSpec] | None = None,
) -> list[ProcessVerdicts]:
    """Guarantee and rely verdicts for every process of ``trace``.

    Without explicit relation lists each process is checked against the
    guarantee and rely of the operations it performs.
    """
    out = []
    for proc in trace.init.procs:
        ops = {op for op, _ in proc.ops}
        gs = guarantees if guarantees is not None else [GUARANTEE_FOR[op] for op in sorted(ops)]
        rs = relies if relies is not None else [RELY_FOR[op] for op in sorted(ops)]
        out.append(
            ProcessVerdicts(
                proc.pid,
                _first_violation(check_guarantee(trace, proc.pid, g) for g in gs),
                _first_violation(check_rely(trace, proc.pid, r) for r in rs),
            )
        )
    return out


def _first_violation(verdicts: Iterable[Verdict]) -> Verdict:
    for verdict in verdicts:
        if not verdict.holds:
            return verdict
    return HELD
