from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from rglin import hwqueue, treiber
from rglin.core import (
    INVOKE,
    RETURNED,
    DisabledTransition,
    Step,
    Trace,
    Transition,
    apply,
    check_chaining,
    check_frame,
    enabled_transitions,
    initial_state,
    replay_schedule,
    runs_of,
)
from rglin.explorer import replay


def stack_state(values=("A", "B", "C"), programs=((("push", "D"),),), guarded=True, mode=treiber.FRESH):
    return initial_state(treiber.TreiberModel(guarded, mode), treiber.initial(values, mode), programs)


def queue_state(values=(), programs=((("enq", "A"),), (("enq", "B"),)), capacity=4):
    model = hwqueue.HWQueueModel(capacity)
    return initial_state(model, hwqueue.initial(values, capacity), programs)


def run_solo(state, pid=0):
    steps = []
    while any(t.pid == pid for t in enabled_transitions(state)):
        step = apply(state, pid)
        steps.append(step)
        state = step.post
    return Trace(steps[0].pre if steps else state, tuple(steps))


class TestEnabledTransitions:
    def test_all_returned_enables_nothing(self):
        state = run_solo(stack_state()).final
        assert state.proc(0).status == RETURNED
        assert enabled_transitions(state) == []

    def test_fresh_push_allocates_first(self):
        assert enabled_transitions(stack_state()) == [Transition(0, "alloc")]

    def test_two_enqs_at_the_bracket(self):
        assert enabled_transitions(queue_state()) == [
            Transition(0, "reserve"),
            Transition(1, "reserve"),
        ]

    def test_ordered_by_pid(self):
        state = stack_state(programs=((("pop", None),), (("push", "D"),), (("pop", None),)))
        assert [t.pid for t in enabled_transitions(state)] == [0, 1, 2]

    def test_next_operation_needs_an_invoke_step(self):
        state = stack_state(programs=((("pop", None), ("push", "A")),))
        for _ in range(4):
            state = apply(state, 0).post
        assert state.proc(0).status == RETURNED
        assert enabled_transitions(state) == [Transition(0, INVOKE)]
        after = apply(state, 0).post.proc(0)
        assert (after.opno, after.op, after.flag, after.locals) == (1, "push", False, ())


class TestApply:
    def _at_cas(self, interfere: bool):
        state = stack_state(programs=((("push", "D"),), (("pop", None),)))
        for _ in range(3):
            state = apply(state, 0).post
        if interfere:
            for _ in range(4):
                state = apply(state, 1).post
        return state

    def test_cas_succeeds_when_head_matches(self):
        state = self._at_cas(interfere=False)
        step = apply(state, 0)
        assert step.label == "cas"
        assert step.post.shared.head == state.proc(0).get("n")
        assert step.post.proc(0).get("cas_ok") is True
        assert step.post.abstract == ("D", "A", "B", "C")

    def test_cas_fails_when_head_moved(self):
        state = self._at_cas(interfere=True)
        step = apply(state, 0)
        assert step.post.shared == state.shared
        assert step.post.proc(0).get("cas_ok") is False
        assert step.post.proc(0).pc == "read"

    def test_deterministic(self):
        state = self._at_cas(interfere=False)
        assert apply(state, 0).post == apply(state, 0).post

    def test_rejects_disabled(self):
        state = run_solo(stack_state()).final
        with pytest.raises(DisabledTransition):
            apply(state, 0)

    def test_rejects_mismatched_label(self):
        with pytest.raises(DisabledTransition):
            apply(stack_state(), 0, Transition(0, "cas"))

    def test_reserve_is_one_step(self):
        step = apply(queue_state(), 0)
        assert step.post.shared.last == 1
        assert step.post.proc(0).get("index") == 0
        assert step.post.proc(0).set_ind


class TestRunsOf:
    def _trace(self, pids):
        state = stack_state(programs=((("push", "D"),), (("pop", None),), (("pop", None),)))
        return Trace(state, tuple(replay_schedule(state, [p - 1 for p in pids])))

    def test_example_partition(self):
        runs = runs_of(self._trace([1, 1, 2, 1]), 0)
        assert [(r.kind, r.first, r.last) for r in runs] == [
            ("program", 0, 1),
            ("environment", 2, 2),
            ("program", 3, 3),
        ]

    def test_single_process_is_one_run(self):
        trace = run_solo(stack_state())
        assert [(r.kind, r.first, r.last) for r in runs_of(trace, 0)] == [("program", 0, 3)]

    def test_fig2a_pop_sees_program_environment_program(self):
        trace = replay_fig2a()
        assert [r.kind for r in runs_of(trace, 0)] == ["program", "environment", "program"]

    @given(st.lists(st.integers(0, 2), max_size=12), st.integers(0, 2))
    def test_partition_property(self, schedule, pid):
        state = stack_state(programs=((("push", "D"),), (("pop", None),), (("pop", None),)))
        steps = []
        for p in schedule:
            if any(t.pid == p for t in enabled_transitions(state)):
                steps.append(apply(state, p))
                state = steps[-1].post
        trace = Trace(steps[0].pre if steps else state, tuple(steps))
        runs = runs_of(trace, pid)
        covered = [k for r in runs for k in r.indices]
        assert covered == list(range(len(steps)))
        assert all(a.kind != b.kind for a, b in zip(runs, runs[1:]))
        for r in runs:
            actors = {trace.steps[k].pid == pid for k in r.indices}
            assert actors == {r.kind == "program"}


def replay_fig2a():
    from rglin.explorer import Scenario

    sc = Scenario("treiber-unguarded", ("A", "B", "C"), ((("pop", None),), (("push", "D"),)))
    return replay(sc, (0, 0, 0, 1, 1, 1, 1, 0))


class TestTraceInvariants:
    def test_chaining_and_frame_on_all_explored_traces(self, push_pop_traces, hwq3_traces):
        for trace in push_pop_traces + hwq3_traces:
            check_chaining(trace)
            for step in trace.steps:
                check_frame(step)

    def test_chaining_detects_a_gap(self):
        trace = run_solo(stack_state())
        broken = Trace(trace.init, (trace.steps[0], trace.steps[2]))
        with pytest.raises(AssertionError):
            check_chaining(broken)

    def test_frame_detects_foreign_write(self):
        state = stack_state(programs=((("push", "D"),), (("pop", None),)))
        step = apply(state, 0)
        other = step.post.with_proc(step.post.proc(1).evolve("next"))
        with pytest.raises(AssertionError):
            check_frame(Step(state, other, 0, "alloc"))

    def test_ghosts_reset_at_invocation(self, push_pop_traces):
        for trace in push_pop_traces:
            for proc in trace.init.procs:
                assert not proc.flag and not proc.set_ind

    def test_flag_is_monotone_within_an_operation(self, push_pop_traces, hwq3_traces):
        for trace in push_pop_traces + hwq3_traces:
            for step in trace.steps:
                for a, b in zip(step.pre.procs, step.post.procs):
                    if a.opno == b.opno:
                        assert not (a.flag and not b.flag)


class TestReplaySchedule:
    def test_empty_schedule(self):
        assert replay_schedule(stack_state(), []) == []

    def test_names_the_first_bad_position(self):
        with pytest.raises(DisabledTransition, match="position 4"):
            replay_schedule(stack_state(), [0, 0, 0, 0, 0])

    def test_unknown_pid(self):
        with pytest.raises(DisabledTransition, match="position 0: no process 3"):
            replay_schedule(stack_state(), [3])


@given(
    st.lists(
        st.one_of(st.just(("pop", None)), st.sampled_from("ABCD").map(lambda v: ("push", v))),
        min_size=1,
        max_size=5,
    ),
    st.lists(st.sampled_from("ABCD"), max_size=4),
    st.sampled_from([treiber.FRESH, treiber.REUSE]),
    st.booleans(),
)
def test_solo_stack_matches_atomic_spec(ops, initial, mode, guarded):
    state = stack_state(tuple(initial), (tuple(ops),), guarded, mode)
    trace = run_solo(state)
    expected, results = tuple(initial), []
    for op, arg in ops:
        expected, result = treiber.STACK_SPEC.apply(expected, op, arg)
        results.append(result)
    got = [s.post.proc(0).result for s in trace.steps
           if s.pre.proc(0).status == "invoked" and s.post.proc(0).status == RETURNED]
    assert trace.final.abstract == expected
    assert got == results
