from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from rglin.explorer import Scenario, explore  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

STACK3 = ("A", "B", "C")


@pytest.fixture(scope="session")
def push_pop():
    """push(D) ∥ pop on [A,B,C], guarded, fresh identifiers."""
    return Scenario("treiber", STACK3, ((("push", "D"),), (("pop", None),)))


@pytest.fixture(scope="session")
def push_pop_traces(push_pop):
    return explore(push_pop)


@pytest.fixture(scope="session")
def unguarded_pair():
    return Scenario("treiber-unguarded", STACK3, ((("pop", None),), (("push", "D"),)))


@pytest.fixture(scope="session")
def unguarded_pair_traces(unguarded_pair):
    return explore(unguarded_pair)


@pytest.fixture(scope="session")
def hwq3():
    """deq ∥ enq(A) ∥ enq(B) on an empty array of 4 slots."""
    return Scenario("hwq", (), ((("deq", None),), (("enq", "A"),), (("enq", "B"),)))


@pytest.fixture(scope="session")
def hwq3_traces(hwq3):
    return explore(hwq3)


@pytest.fixture(scope="session")
def two_deqs():
    """Two competing deqs on a one-element queue."""
    return Scenario("hwq", ("A",), ((("deq", None),), (("deq", None),)))


@pytest.fixture(scope="session")
def aba_reuse():
    return Scenario(
        "treiber-aba", ("A", "B"), ((("pop", None),), (("pop", None), ("push", "C")))
    )


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.line(n))
