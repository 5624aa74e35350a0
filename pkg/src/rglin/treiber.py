"""Treiber stack: atomic spec, flag-instrumented guarantees, and the code model.

The concrete model runs the classic push/pop code over an explicit node
store.  Node identifiers are either always fresh (garbage collection: a
popped node is never seen again) or recycled LIFO from a freelist, which is
what lets a stale compare-and-swap succeed after the head node has been
popped and pushed back (the ABA problem).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Sequence

from .core import but, ProcessState, SystemState, Trace, Value, INVOKED

FRESH = "fresh-ids"
REUSE = "reuse"

DEFAULT_ALPHABET = ("A", "B", "C", "D")
DEFAULT_DEPTH = 6


class StoreCorruption(ValueError):
    """The head chain of a node store is cyclic or runs into a freed node."""


# -- atomic specification ----------------------------------------------------


def push0(stack: Sequence[str], v: Value) -> tuple[str, ...]:
    if v is None:
        raise ValueError("cannot push null")
    return (v, *stack)


def pop0(stack: Sequence[str]) -> tuple[tuple[str, ...], Value]:
    """Pop the head; the empty stack pops to itself with a null result."""
    if not stack:
        return tuple(stack), None
    return tuple(stack[1:]), stack[0]


class StackSpec:
    name = "stack"
    ops = ("push", "pop")

    def apply(self, state, op, arg):
        """``(state', result)``, or ``None`` where the sequential stack has no such step."""
        if op == "push":
            return push0(state, arg), None
        if op == "pop":
            return pop0(state)
        raise ValueError(f"unknown stack operation {op!r}")

    def completion_results(self, op, alphabet):
        if op == "pop":
            return (*alphabet, None)
        return (None,)


STACK_SPEC = StackSpec()


# -- node store --------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    val: str
    next: int | None


@dataclass(frozen=True)
class NodeStore:
    nodes: tuple[Node, ...] = ()
    head: int | None = None
    freelist: tuple[int, ...] = ()
    mode: str = FRESH

    @classmethod
    def from_list(cls, values: Sequence[str], mode: str = FRESH) -> NodeStore:
        nodes = tuple(
            Node(v, k + 1 if k + 1 < len(values) else None) for k, v in enumerate(values)
        )
        return cls(nodes, 0 if values else None, (), mode)

    def allocate(self, val: str) -> tuple[NodeStore, int]:
        if self.mode == REUSE and self.freelist:
            nid = self.freelist[-1]
            nodes = list(self.nodes)
            nodes[nid] = Node(val, None)
            return but(self, nodes=tuple(nodes), freelist=self.freelist[:-1]), nid
        nid = len(self.nodes)
        return but(self, nodes=self.nodes + (Node(val, None),)), nid

    def set_next(self, nid: int, nxt: int | None) -> NodeStore:
        nodes = list(self.nodes)
        nodes[nid] = replace(nodes[nid], next=nxt)
        return but(self, nodes=tuple(nodes))

    def release(self, nid: int) -> NodeStore:
        if self.mode != REUSE:
            return self
        return but(self, freelist=self.freelist + (nid,))

    def chain(self) -> list[int]:
        ids, seen = [], set()
        nid = self.head
        while nid is not None:
            if nid in seen:
                raise StoreCorruption(f"cycle through node {nid}")
            if nid in self.freelist:
                raise StoreCorruption(f"head chain reaches freed node {nid}")
            seen.add(nid)
            ids.append(nid)
            nid = self.nodes[nid].next
        return ids


def abstraction(store: NodeStore) -> tuple[str, ...]:
    """Values along the head chain."""
    return tuple(store.nodes[nid].val for nid in store.chain())


# -- concrete programs ---------------------------------------------------------
#
# One atomic step per shared access.  Local-only statements (the null test,
# the loop condition, ``return v``) run with the preceding shared access.


def _push_step(store: NodeStore, proc: ProcessState):
    pc = proc.pc
    if pc == "alloc":  # Node n = new Node(v)
        store, nid = store.allocate(proc.arg)
        return "alloc", store, proc.evolve("read", n=nid)
    if pc == "read":  # x = head
        return "read", store, proc.evolve("link", x=store.head)
    if pc == "link":  # n.next = x
        return "link", store.set_next(proc.get("n"), proc.get("x")), proc.evolve("cas")
    if pc == "cas":  # while (!CAS(head, x, n))
        if store.head == proc.get("x"):
            store = but(store, head=proc.get("n"))
            return "cas", store, proc.evolve(cas_ok=True).finish(None)
        return "cas", store, proc.evolve("read", cas_ok=False)
    raise AssertionError(f"push has no location {pc!r}")


def _pop_step(store: NodeStore, proc: ProcessState, guarded: bool):
    pc = proc.pc
    if pc == "read":  # x = head; if (x == null) return null
        x = store.head
        if x is None:
            return "read", store, proc.evolve(x=None, v=None).finish(None)
        return "read", store, proc.evolve("next", x=x)
    if pc == "next":  # y = x.next
        return "next", store, proc.evolve("val", y=store.nodes[proc.get("x")].next)
    if pc == "val":  # v = x.val
        return "val", store, proc.evolve("cas", v=store.nodes[proc.get("x")].val)
    if pc == "cas" and guarded:  # while (!CAS(head, x, y)); return v
        x = proc.get("x")
        if store.head == x:
            store = but(store, head=proc.get("y")).release(x)
            return "cas", store, proc.evolve(cas_ok=True).finish(proc.get("v"))
        return "cas", store, proc.evolve("read", cas_ok=False)
    if pc == "cas":  # unguarded: head = y; return v
        store = but(store, head=proc.get("y")).release(proc.get("x"))
        return "write", store, proc.evolve().finish(proc.get("v"))
    raise AssertionError(f"pop has no location {pc!r}")


def _safe_abstraction(store: NodeStore):
    try:
        return abstraction(store)
    except StoreCorruption as err:
        return Corrupt(str(err))


@dataclass(frozen=True)
class Corrupt:
    """Stand-in abstract state for a corrupted node store."""

    reason: str


@dataclass(frozen=True)
class TreiberModel:
    guarded: bool = True
    mode: str = FRESH

    @property
    def name(self) -> str:
        if not self.guarded:
            return "treiber-unguarded"
        return "treiber-aba" if self.mode == REUSE else "treiber"

    spec = STACK_SPEC

    def begin(self, proc: ProcessState) -> ProcessState:
        return replace(proc, pc="alloc" if proc.op == "push" else "read")

    def program_step(self, store: NodeStore, proc: ProcessState):
        if proc.op == "push":
            return _push_step(store, proc)
        if proc.op == "pop":
            return _pop_step(store, proc, self.guarded)
        raise ValueError(f"stack has no operation {proc.op!r}")

    def instrument(self, pre: SystemState, post: SystemState, pid: int, label: str):
        # The flag records that this operation has changed the abstract stack.
        proc = post.proc(pid)
        if pre.abstract != post.abstract:
            return but(proc, flag=True)
        return proc

    def abstraction(self, store: NodeStore):
        return _safe_abstraction(store)

    def shared_var(self, state: SystemState, name: str):
        if name == "list":
            return state.abstract
        if name == "head":
            return state.shared.head
        raise KeyError(f"stack has no shared variable {name!r}")

    def canonical(self, state: SystemState) -> Hashable:
        if self.mode == REUSE:
            return (state.shared, state.procs)
        return _canonical_fresh(state)


_NODE_LOCALS = ("n", "x", "y")


def _canonical_fresh(state: SystemState) -> Hashable:
    # Fresh identifiers are interchangeable: rename them in discovery order.
    store = state.shared
    names: dict[int, int] = {}

    def visit(nid):
        while nid is not None and nid not in names:
            names[nid] = len(names)
            nid = store.nodes[nid].next

    visit(store.head)
    for proc in state.procs:
        for key in _NODE_LOCALS:
            visit(proc.get(key))
    nodes = tuple(
        (store.nodes[nid].val, names.get(store.nodes[nid].next))
        for nid in sorted(names, key=names.get)
    )

    procs = tuple(
        (
            p.opno,
            p.pc,
            tuple((k, names.get(v) if k in _NODE_LOCALS else v) for k, v in p.locals),
            p.flag,
            p.status,
            p.result,
        )
        for p in state.procs
    )
    return (names.get(store.head), nodes, procs)


def initial(values: Sequence[str], mode: str = FRESH) -> NodeStore:
    return NodeStore.from_list(tuple(values), mode)


# -- intermediate level: abstract list plus ghost flag ----------------------------


@dataclass(frozen=True)
class StackView:
    """What the stack guarantees talk about: the list, the operation's flag,
    its result ``x`` (pop) and argument ``v`` (push)."""

    list: tuple[str, ...] | Corrupt
    flag: bool = False
    x: Value = None
    v: Value = None


def stack_view(state: SystemState, pid: int) -> StackView:
    proc = state.proc(pid)
    x = proc.get("v") if proc.op == "pop" else None
    return StackView(state.abstract, proc.flag, x, proc.arg)


def _tl(xs):
    return xs[1:] if isinstance(xs, tuple) else xs


def _hd(xs):
    return xs[0] if isinstance(xs, tuple) and xs else None


def _changed(a: StackView, b: StackView) -> bool:
    return a.list != b.list


# Each guarantee is a list of named clauses; a violation reports the first
# clause that fails.  The pop guarantee also pins the result at the step that
# changes the list and freezes it afterwards (keeps the relation transitive).
GUAR_POP1_CLAUSES = (
    ("list' = tl list", lambda a, b: not _changed(a, b) or b.list == _tl(a.list)),
    ("flag' = true ∧ flag = false", lambda a, b: not _changed(a, b) or (b.flag and not a.flag)),
    ("x' = hd list", lambda a, b: not _changed(a, b) or b.x == _hd(a.list)),
    ("list' = list ⟹ flag' = flag", lambda a, b: _changed(a, b) or b.flag == a.flag),
    ("flag ⟹ x' = x", lambda a, b: not a.flag or b.x == a.x),
)

GUAR_PUSH1_CLAUSES = (
    (
        "list' = [v] ⌢ list",
        lambda a, b: not _changed(a, b)
        or (isinstance(a.list, tuple) and b.list == (a.v, *a.list)),
    ),
    ("flag' = true ∧ flag = false", lambda a, b: not _changed(a, b) or (b.flag and not a.flag)),
    ("list' = list ⟹ flag' = flag", lambda a, b: _changed(a, b) or b.flag == a.flag),
)


def failed_clause(clauses, pre, post) -> str | None:
    for label, holds in clauses:
        if not holds(pre, post):
            return label
    return None


def guar_pop1(pre: StackView, post: StackView) -> bool:
    return failed_clause(GUAR_POP1_CLAUSES, pre, post) is None


def guar_push1(pre: StackView, post: StackView, v: Value = None) -> bool:
    if v is not None:
        pre, post = replace(pre, v=v), replace(post, v=v)
    return failed_clause(GUAR_PUSH1_CLAUSES, pre, post) is None


def possible_values(trace: Trace, pid: int, var: str, opno: int = 0) -> set:
    """Values ``var`` held from the invocation to the response of one operation.

    Both boundary states are included.  An operation still pending at the end
    of the trace spans to the final state.
    """
    states = trace.states
    start = end = None
    for k, state in enumerate(states):
        proc = state.proc(pid)
        if proc.opno != opno:
            continue
        if start is None and proc.status == INVOKED:
            start = k
        if start is not None:
            end = k
            if proc.status != INVOKED:
                break
    if start is None:
        raise ValueError(f"process {pid} never invoked operation {opno}")
    model = trace.init.model
    out = set()
    for state in states[start : end + 1]:
        out.add(model.shared_var(state, var))
    return out


def post_push1(trace: Trace, pid: int, opno: int = 0) -> bool:
    """∃ l ∈ posvals(list) · hd l = v for the given push."""
    v = trace.init.proc(pid).ops[opno][1]
    return any(_hd(lst) == v for lst in possible_values(trace, pid, "list", opno))
