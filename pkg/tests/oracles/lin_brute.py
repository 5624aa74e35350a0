"""Permutation-based linearisability check, independent of ``rglin.linearise``.

Works on plain tuples: an operation is ``(pid, op, arg, invoked, responded,
result)`` with ``responded is None`` when pending.  Every way of dropping or
completing the pending operations is tried, and for each, every permutation.
"""

from __future__ import annotations

import itertools

DROP = object()


def stack_step(state, op, arg):
    if op == "push":
        return (arg, *state), None
    if not state:
        return state, None
    return state[1:], state[0]


def queue_step(state, op, arg):
    if op == "enq":
        return (*state, arg), None
    if not state:
        return None
    return state[1:], state[0]


def operations(events):
    """Pair invocations with responses; events are (kind, pid, op, arg, result, pos)."""
    open_, ops = {}, []
    for kind, pid, op, arg, result, pos in events:
        if kind == "invocation":
            open_[pid] = [pid, op, arg, pos, None, None]
        else:
            entry = open_.pop(pid)
            entry[4], entry[5] = pos, result
            ops.append(tuple(entry))
    return ops + [tuple(e) for e in open_.values()]


def linearisable(events, initial, final, structure, alphabet):
    step = stack_step if structure == "stack" else queue_step
    ops = operations(events)
    done = [o for o in ops if o[4] is not None]
    pending = [o for o in ops if o[4] is None]
    end = 10**9
    answers = {"push": [None], "enq": [None], "pop": [*alphabet, None], "deq": list(alphabet)}
    for picks in itertools.product(*[[DROP, *answers[o[1]]] for o in pending]):
        chosen = list(done) + [
            (o[0], o[1], o[2], o[3], end, pick) for o, pick in zip(pending, picks) if pick is not DROP
        ]
        for perm in itertools.permutations(chosen):
            if any(b[4] < a[3] for i, a in enumerate(perm) for b in perm[i + 1:]):
                continue  # b finished before a started, yet a is ordered first
            state, ok = initial, True
            for pid, op, arg, inv, res, result in perm:
                out = step(state, op, arg)
                if out is None or out[1] != result:
                    ok = False
                    break
                state = out[0]
            if ok and (final is None or state == final):
                return True
    return False
