"""Herlihy-Wing queue over a finite array.

``enq`` reserves a slot by atomically reading and bumping ``last`` and then
writes its value there; ``deq`` repeatedly sweeps the reserved prefix,
swapping each slot with null until it pulls out a non-null value.  Which
abstract queue a concrete array stands for depends on where the sweeping
``deq`` currently is, hence the index-sensitive retrieve function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Sequence

from .core import but, HALTED, ProcessState, SystemState, Value

DEFAULT_CAPACITY = 4
DEFAULT_ALPHABET = ("A", "B")
DEFAULT_SPIN_ROUNDS = 2


# -- atomic specification ----------------------------------------------------


def enq0(queue: Sequence[str], v: Value) -> tuple[str, ...]:
    if v is None:
        raise ValueError("cannot enqueue null")
    return (*queue, v)


def deq0(queue: Sequence[str]) -> tuple[tuple[str, ...], str]:
    if not queue:
        raise ValueError("deq on an empty queue has no atomic counterpart")
    return tuple(queue[1:]), queue[0]


class QueueSpec:
    name = "queue"
    ops = ("enq", "deq")

    def apply(self, state, op, arg):
        if op == "enq":
            return enq0(state, arg), None
        if op == "deq":
            # The concrete deq spins instead of returning empty.
            return deq0(state) if state else None
        raise ValueError(f"unknown queue operation {op!r}")

    def completion_results(self, op, alphabet):
        if op == "deq":
            return tuple(alphabet)
        return (None,)


QUEUE_SPEC = QueueSpec()


# -- concrete state ------------------------------------------------------------


@dataclass(frozen=True)
class QueueStore:
    q: tuple[Value, ...]
    last: int = 0

    @property
    def n(self) -> int:
        return len(self.q)

    @classmethod
    def from_list(cls, values: Sequence[str], capacity: int = DEFAULT_CAPACITY):
        if len(values) > capacity:
            raise ValueError(f"{len(values)} initial values exceed capacity {capacity}")
        return cls(tuple(values) + (None,) * (capacity - len(values)), len(values))

    def put(self, index: int, value: Value) -> QueueStore:
        q = list(self.q)
        q[index] = value
        return but(self, q=tuple(q))


def first(q: Sequence[Value], x: int, n: int) -> int:
    """Index of the first non-null slot at or after ``x``; ``n`` if none."""
    while x < n:
        if q[x] is not None:
            return x
        x += 1
    return n


def retr_deq(q: Sequence[Value], index: int) -> tuple[str, ...]:
    """Abstract queue seen by a deq currently examining slot ``index``.

    Elements before ``index`` were, in effect, enqueued after the one at
    ``index``.  Null slots are not abstract elements and are dropped.
    """
    n = len(q)
    if not 0 <= index <= n:
        raise ValueError(f"index {index} outside 0..{n}")
    lead = [q[index]] if index < n else []
    before = q[first(q, 0, n) : index]
    after = q[index + 1 : n]
    return tuple(v for v in (*lead, *before, *after) if v is not None)


def no_change(s: QueueStore, t: QueueStore) -> bool:
    return s.last == t.last and s.q == t.q


def check_invariant(store: QueueStore, procs: Sequence[ProcessState] = ()) -> None:
    """inv-Σ₁ plus "nothing written past last"; raises AssertionError."""
    n = store.n
    if not 0 <= store.last <= n:
        raise AssertionError(f"last={store.last} outside 0..{n}")
    for i in range(store.last, n):
        if store.q[i] is not None:
            raise AssertionError(f"slot {i} filled beyond last={store.last}")
    for proc in procs:
        index = proc.get("index")
        if index is not None and not 0 <= index <= n:
            raise AssertionError(f"process {proc.pid} index={index} outside 0..{n}")


# -- concrete programs ---------------------------------------------------------


def _enq_step(store: QueueStore, proc: ProcessState):
    if proc.pc == "reserve":  # <index = last; last = last + 1>
        if store.last >= store.n:
            # Array exhausted: stop enqueuing (the operation never responds).
            return "reserve", store, but(proc.evolve("halted"), status=HALTED)
        store2 = but(store, last=store.last + 1)
        return "reserve", store2, proc.evolve("write", index=store.last)
    if proc.pc == "write":  # q[index] = v
        return "write", store.put(proc.get("index"), proc.arg), proc.finish(None)
    raise AssertionError(f"enq has no location {proc.pc!r}")


def _deq_step(store: QueueStore, proc: ProcessState, spin_rounds: int):
    if proc.pc == "scan":  # range = last; index = 0
        rounds = proc.get("rounds", 0)
        if rounds >= spin_rounds:
            return None
        rng = store.last
        nxt = "swap" if rng > 0 else "scan"
        return "scan", store, proc.evolve(nxt, range=rng, index=0, rounds=rounds + 1)
    if proc.pc == "swap":  # x = null; swap(q[index], x); if (x != null) return x
        index = proc.get("index")
        x = store.q[index]
        store = store.put(index, None)
        if x is not None:
            return "swap", store, proc.evolve(x=x).finish(x)
        index += 1
        nxt = "swap" if index < proc.get("range") else "scan"
        return "swap", store, proc.evolve(nxt, x=None, index=index)
    raise AssertionError(f"deq has no location {proc.pc!r}")


@dataclass(frozen=True)
class HWQueueModel:
    capacity: int = DEFAULT_CAPACITY
    spin_rounds: int = DEFAULT_SPIN_ROUNDS
    name: str = "hwq"

    spec = QUEUE_SPEC

    def begin(self, proc: ProcessState) -> ProcessState:
        return replace(proc, pc="reserve" if proc.op == "enq" else "scan")

    def program_step(self, store: QueueStore, proc: ProcessState):
        if proc.op == "enq":
            return _enq_step(store, proc)
        if proc.op == "deq":
            return _deq_step(store, proc, self.spin_rounds)
        raise ValueError(f"queue has no operation {proc.op!r}")

    def instrument(self, pre: SystemState, post: SystemState, pid: int, label: str):
        proc = post.proc(pid)
        if label == "reserve" and proc.status != HALTED:
            return but(proc, set_ind=True)
        if label == "write" or (label == "swap" and proc.result is not None):
            return but(proc, flag=True)
        return proc

    def abstraction(self, store: QueueStore) -> tuple[str, ...]:
        return retr_deq(store.q, 0)

    def shared_var(self, state: SystemState, name: str):
        if name == "list":
            return state.abstract
        if name in ("q", "last"):
            return getattr(state.shared, name)
        raise KeyError(f"queue has no shared variable {name!r}")

    def canonical(self, state: SystemState) -> Hashable:
        return (state.shared, state.procs)


def initial(values: Sequence[str], capacity: int = DEFAULT_CAPACITY) -> QueueStore:
    return QueueStore.from_list(tuple(values), capacity)


# -- intermediate level: array, last, and one process's index/ghosts -----------


@dataclass(frozen=True)
class QueueView:
    q: tuple[Value, ...]
    last: int
    index: int | None = None
    flag: bool = False
    set_ind: bool = False
    v: Value = None

    @property
    def n(self) -> int:
        return len(self.q)

    def slot(self, i: int | None) -> Value:
        # Positions outside the array read as null.
        if i is None or not 0 <= i < len(self.q):
            return None
        return self.q[i]


def queue_view(state: SystemState, pid: int) -> QueueView:
    proc = state.proc(pid)
    return QueueView(
        state.shared.q,
        state.shared.last,
        proc.get("index"),
        proc.flag,
        proc.set_ind,
        proc.arg if proc.op == "enq" else None,
    )


def _nochange(a: QueueView, b: QueueView) -> bool:
    return a.last == b.last and a.q == b.q


def _others_unchanged(a: QueueView, b: QueueView, keep: int | None) -> bool:
    return all(a.q[j] == b.q[j] for j in range(a.n) if j != keep)


def _deq_skipped_null(a: QueueView, b: QueueView) -> bool:
    start = 0 if a.index is None else a.index
    stop = 0 if b.index is None else b.index
    return all(a.slot(i) is None for i in range(start, stop))


def _deq_took(a: QueueView, b: QueueView) -> bool:
    if a.slot(b.index) == b.slot(b.index):
        return True
    return b.slot(b.index) is None and b.flag


GUAR_DEQ1_CLAUSES = (
    ("clause 1: flag ⟹ flag' ∧ noChange", lambda a, b: not a.flag or (b.flag and _nochange(a, b))),
    ("clause 2: noChange ∧ ¬flag ⟹ ¬flag'", lambda a, b: not (_nochange(a, b) and not a.flag) or not b.flag),
    ("clause 3: q(index..index'-1) = null", _deq_skipped_null),
    ("clause 4: q(index') changed ⟹ q'(index') = null ∧ flag'", _deq_took),
    ("clause 5: slots other than index' unchanged", lambda a, b: _others_unchanged(a, b, b.index)),
)


def _enq_reserve(a: QueueView, b: QueueView) -> bool:
    if a.last == b.last:
        return True
    return b.last == a.last + 1 and b.index == a.last and b.set_ind and not a.set_ind


def _enq_index_set(a: QueueView, b: QueueView) -> bool:
    if not a.set_ind:
        return True
    if not _others_unchanged(a, b, a.index):
        return False
    wrote = b.slot(a.index) == a.v and b.flag and b.index == a.index
    return wrote or (_nochange(a, b) and b.index == a.index)


def _enq_index_unset(a: QueueView, b: QueueView) -> bool:
    if a.set_ind:
        return True
    if not _others_unchanged(a, b, a.last):
        return False
    reserved = b.last == a.last + 1 and b.index == a.last and b.set_ind
    wrote = reserved and b.slot(a.last) == a.v and b.flag
    stutter = _nochange(a, b) and b.index == a.index
    # Reserving without writing yet is the case clause 3 already governs.
    reserve_only = reserved and a.q == b.q
    return wrote or stutter or reserve_only


GUAR_ENQ1_CLAUSES = (
    ("clause 1: flag ⟹ flag' ∧ noChange", lambda a, b: not a.flag or (b.flag and _nochange(a, b))),
    ("clause 2: noChange ∧ ¬flag ⟹ ¬flag'", lambda a, b: not (_nochange(a, b) and not a.flag) or not b.flag),
    ("clause 3: last' ≠ last ⟹ reserve slot last", _enq_reserve),
    ("clause 4: setInd ⟹ write v at index or stutter", _enq_index_set),
    ("clause 5: ¬setInd ⟹ reserve(+write) or stutter", _enq_index_unset),
)

RELY1_CLAUSES = (
    (
        "flag = false ∧ index ≠ nil ⟹ q'(index) = q(index)",
        lambda a, b: a.flag or a.index is None or a.slot(a.index) == b.slot(a.index),
    ),
)


def _holds(clauses, a, b) -> bool:
    return all(holds(a, b) for _, holds in clauses)


def guar_deq1(pre: QueueView, post: QueueView) -> bool:
    return _holds(GUAR_DEQ1_CLAUSES, pre, post)


def guar_enq1(pre: QueueView, post: QueueView, v: Value = None) -> bool:
    if v is not None:
        pre, post = replace(pre, v=v), replace(post, v=v)
    return _holds(GUAR_ENQ1_CLAUSES, pre, post)


def rely1(pre: QueueView, post: QueueView) -> bool:
    """Environment steps leave the slot this process is working on alone."""
    return _holds(RELY1_CLAUSES, pre, post)
