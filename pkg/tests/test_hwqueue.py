from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from rglin.explorer import Scenario, explore, replay
from rglin.hwqueue import (
    GUAR_DEQ1_CLAUSES,
    QueueStore,
    QueueView,
    check_invariant,
    deq0,
    enq0,
    first,
    guar_deq1,
    guar_enq1,
    no_change,
    queue_view,
    rely1,
    retr_deq,
)
from rglin.linearise import project_history
from rglin.treiber import failed_clause

N = None


class TestAtomicSpec:
    @pytest.mark.parametrize(
        "queue, v, expected", [((), "A", ("A",)), (("B",), "A", ("B", "A")), (("A", "B"), "C", ("A", "B", "C"))]
    )
    def test_enq0(self, queue, v, expected):
        assert enq0(queue, v) == expected

    def test_enq0_rejects_null(self):
        with pytest.raises(ValueError):
            enq0((), None)

    @pytest.mark.parametrize(
        "queue, expected",
        [(("B", "A"), (("A",), "B")), (("A",), ((), "A")), (("B", "A", "C"), (("A", "C"), "B"))],
    )
    def test_deq0(self, queue, expected):
        assert deq0(queue) == expected

    def test_deq0_rejects_empty(self):
        with pytest.raises(ValueError):
            deq0(())


class TestHelpers:
    def test_no_change(self):
        s = QueueStore(("A", N), 1)
        assert no_change(s, s)
        assert not no_change(s, QueueStore(("A", N), 2))
        assert not no_change(s, QueueStore((N, N), 1))

    @pytest.mark.parametrize(
        "q, expected", [(("A", "B", "C"), 0), ((N, N, N), 3), ((N, "B", "C"), 1)]
    )
    def test_first(self, q, expected):
        assert first(q, 0, 3) == expected

    @given(st.lists(st.sampled_from(["A", "B", None]), max_size=6))
    def test_first_is_idempotent(self, q):
        n = len(q)
        once = first(q, 0, n)
        assert first(q, once, n) == once

    @given(st.lists(st.sampled_from(["A", "B", None]), max_size=6), st.data())
    def test_first_matches_a_direct_scan(self, q, data):
        x = data.draw(st.integers(0, len(q)))
        expected = next((i for i in range(x, len(q)) if q[i] is not None), len(q))
        assert first(q, x, len(q)) == expected

    def test_retr_deq_examples(self):
        assert retr_deq(("A", "B", "C"), 1) == ("B", "A", "C")
        assert retr_deq(("A", N, "C"), 1) == ("A", "C")
        assert retr_deq(("A", "B", "C"), 0) == ("A", "B", "C")
        assert retr_deq(("B", "A", "C"), 0)[1:] == ("A", "C")

    def test_retr_deq_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            retr_deq(("A",), 2)

    @given(st.lists(st.sampled_from(["A", "B", "C", None]), max_size=6), st.data())
    def test_retr_deq_is_a_permutation_of_the_values(self, q, data):
        index = data.draw(st.integers(0, len(q)))
        assert sorted(retr_deq(q, index)) == sorted(v for v in q if v is not None)

    def test_invariant_violations(self):
        with pytest.raises(AssertionError):
            check_invariant(QueueStore((N, "A"), 1))
        with pytest.raises(AssertionError):
            check_invariant(QueueStore((N, N), 3))


def qv(q, last, index=None, flag=False, set_ind=False, v=None):
    return QueueView(tuple(q), last, index, flag, set_ind, v)


class TestGuarDeq1:
    def test_swap_ahead_of_index_is_invalid(self):
        pre, post = qv("AB", 2, 0), qv(("A", N), 2, 1, True)
        assert not guar_deq1(pre, post)
        assert failed_clause(GUAR_DEQ1_CLAUSES, pre, post).startswith("clause 3")

    def test_swap_at_index_is_valid(self):
        assert guar_deq1(qv("AB", 2, 1), qv(("A", N), 2, 1, True))

    def test_stutter(self):
        s = qv("AB", 2, 1)
        assert guar_deq1(s, s)

    def test_finished_deq_changes_nothing(self):
        assert not guar_deq1(qv(("A", N), 2, 1, True), qv((N, N), 2, 1, True))


class TestGuarEnq1:
    def test_reserve(self):
        assert guar_enq1(qv(("A", N, N), 1), qv(("A", N, N), 2, 1, set_ind=True), v="B")

    def test_write_after_reserve(self):
        pre = qv(("A", N, N), 2, 1, set_ind=True)
        assert guar_enq1(pre, qv(("A", "B", N), 2, 1, True, True), v="B")

    def test_reserve_and_write_together(self):
        assert guar_enq1(qv(("A", N, N), 1), qv(("A", "B", N), 2, 1, True, True), v="B")

    def test_last_jumps_by_two(self):
        assert not guar_enq1(qv((N, N, N), 0), qv((N, N, N), 2, 0, set_ind=True), v="A")

    def test_write_of_the_wrong_value(self):
        pre = qv((N, N), 1, 0, set_ind=True)
        assert not guar_enq1(pre, qv(("B", N), 1, 0, True, True), v="A")


class TestRely1:
    def test_other_slot_written(self):
        assert rely1(qv((N, N), 2, 0), qv((N, "B"), 2, 0))

    def test_own_slot_emptied(self):
        assert not rely1(qv(("A", N), 1, 0), qv((N, N), 1, 0))

    def test_after_flag_anything_goes(self):
        assert rely1(qv(("A", N), 1, 0, True), qv((N, N), 1, 0, True))


class TestPrograms:
    def test_canned_schedule(self, hwq3):
        trace = replay(hwq3, (1, 2, 0, 0, 1, 2, 0))
        assert trace.final.proc(0).result == "B"
        assert trace.final.abstract == ("A",)

    def test_solo_enq_then_deq(self):
        sc = Scenario("hwq", (), ((("enq", "A"), ("deq", None)),))
        (trace,) = explore(sc)
        assert trace.final.proc(0).result == "A"

    def test_deq_on_empty_is_truncated(self):
        sc = Scenario("hwq", (), ((("deq", None),),))
        (trace,) = explore(sc)
        assert trace.status == "truncated"
        assert [s.label for s in trace.steps] == ["scan"] * sc.spin_rounds
        history = project_history(trace)
        assert [op.pending for op in history.operations()] == [True]

    def test_enq_past_capacity_halts(self):
        sc = Scenario("hwq", ("A",), ((("enq", "B"),),), capacity=1)
        (trace,) = explore(sc)
        assert trace.final.proc(0).status == "halted"
        assert trace.status == "complete"

    @given(st.lists(st.sampled_from(["A", "B", "deq"]), min_size=1, max_size=6))
    def test_solo_fifo(self, script):
        ops, model, expected = [], [], []
        for item in script:
            if item == "deq":
                if not model:
                    continue
                expected.append(model.pop(0))
                ops.append(("deq", None))
            else:
                model.append(item)
                ops.append(("enq", item))
        if not ops:
            return
        sc = Scenario("hwq", (), (tuple(ops),), capacity=6, alphabet=("A", "B"))
        (trace,) = explore(sc)
        got = [s.post.proc(0).result for s in trace.steps
               if s.pre.proc(0).status == "invoked" and s.post.proc(0).status == "returned"
               and s.pre.proc(0).op == "deq"]
        assert got == expected
        assert trace.final.abstract == tuple(model)


class TestExploredProperties:
    def test_invariant_on_every_step(self, hwq3_traces, two_deqs):
        for trace in hwq3_traces + explore(two_deqs):
            for state in trace.states:
                check_invariant(state.shared, state.procs)

    def test_retr_deq_consistent_on_every_successful_swap(self, hwq3_traces, two_deqs):
        swaps = 0
        for trace in hwq3_traces + explore(two_deqs):
            for step in trace.steps:
                after = step.post.proc(step.pid)
                if step.label != "swap" or after.status != "returned":
                    continue
                swaps += 1
                index = step.pre.proc(step.pid).get("index")
                before = retr_deq(step.pre.shared.q, index)
                now = retr_deq(step.post.shared.q, index)
                assert now == before[1:]
                assert after.result == before[0]
        assert swaps > 0

    def test_ghosts(self, hwq3_traces):
        for trace in hwq3_traces:
            for step in trace.steps:
                a, b = step.pre.proc(step.pid), step.post.proc(step.pid)
                if step.label == "reserve" and b.status != "halted":
                    assert b.set_ind and not a.set_ind
                if step.label == "write":
                    assert b.flag and not a.flag

    def test_set_ind_implies_index(self, hwq3_traces):
        for trace in hwq3_traces:
            for state in trace.states:
                for pid, proc in enumerate(state.procs):
                    if proc.set_ind:
                        assert queue_view(state, pid).index is not None
