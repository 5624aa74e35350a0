"""Scenario files, JSON reports, and text rendering of states and traces.

Scenario and report documents carry a top-level ``"format": 1``.  States are
serialised canonically (sorted keys, fixed separators), so replaying a
report's schedule reproduces its ``steps`` byte for byte.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from . import hwqueue, treiber
from .core import ProcessState, Step, SystemState, Trace
from .explorer import STRUCTURES, CorrelationReport, Row, Scenario
from .linearise import History, LinWitness, project_history
from .relations import ProcessVerdicts, Verdict

FORMAT = 1

_OP = {
    "type": "object",
    "properties": {
        "op": {"enum": ["push", "pop", "enq", "deq"]},
        "arg": {"type": ["string", "null"]},
    },
    "required": ["op"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "format": {"const": FORMAT},
        "name": {"type": "string"},
        "structure": {"enum": list(STRUCTURES)},
        "initial": {"type": "array", "items": {"type": "string"}},
        "processes": {
            "type": "array",
            "items": {
                "oneOf": [
                    _OP,
                    {
                        "type": "object",
                        "properties": {"ops": {"type": "array", "items": _OP, "minItems": 1}},
                        "required": ["ops"],
                        "additionalProperties": False,
                    },
                ]
            },
        },
        "bounds": {
            "type": "object",
            "properties": {
                "max_steps": {"type": "integer", "minimum": 1},
                "spin_rounds": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "mode": {"enum": [treiber.FRESH, treiber.REUSE]},
        "capacity": {"type": "integer", "minimum": 1},
        "alphabet": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "schedule": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "required": ["format", "structure", "processes"],
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    """A scenario (or report) document is malformed or inconsistent."""


# Canned scenarios shipped with the package, plus aliases.
ALIASES = {"hwq-paper-trace": "hwq-paper"}


def canned_names() -> list[str]:
    root = resources.files("rglin") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def read_document(path_or_name: str) -> dict:
    """Parse a JSON file, falling back to a canned scenario of that name."""
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text()
    else:
        name = ALIASES.get(path_or_name, path_or_name)
        canned = resources.files("rglin") / "scenarios" / f"{name}.json"
        if not canned.is_file():
            raise ScenarioError(
                f"{path_or_name}: no such file or canned scenario "
                f"(canned: {', '.join(canned_names())})"
            )
        text = canned.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path_or_name}: malformed JSON: {exc}") from None


def _location(error: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "(top level)"


def scenario_from_json(doc: Any) -> Scenario:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"scenario field {_location(exc)}: {exc.message}") from None
    processes = []
    for entry in doc["processes"]:
        ops = entry["ops"] if "ops" in entry else [entry]
        processes.append(tuple((o["op"], o.get("arg")) for o in ops))
    bounds = doc.get("bounds", {})
    kwargs: dict[str, Any] = {}
    for key in ("max_steps", "spin_rounds"):
        if key in bounds:
            kwargs[key] = bounds[key]
    for key in ("mode", "capacity", "name"):
        if key in doc:
            kwargs[key] = doc[key]
    if "alphabet" in doc:
        kwargs["alphabet"] = tuple(doc["alphabet"])
    if "schedule" in doc:
        kwargs["schedule"] = tuple(doc["schedule"])
    try:
        return Scenario(doc["structure"], tuple(doc.get("initial", ())), tuple(processes), **kwargs)
    except ValueError as exc:
        raise ScenarioError(f"scenario: {exc}") from None


def scenario_to_json(sc: Scenario) -> dict:
    procs = []
    for ops in sc.processes:
        items = [{"op": op, "arg": arg} if arg is not None else {"op": op} for op, arg in ops]
        procs.append(items[0] if len(items) == 1 else {"ops": items})
    doc: dict[str, Any] = {
        "format": FORMAT,
        "structure": sc.structure,
        "initial": list(sc.initial),
        "processes": procs,
        "bounds": {"max_steps": sc.max_steps, "spin_rounds": sc.spin_rounds},
    }
    if sc.name:
        doc["name"] = sc.name
    if sc.mode is not None:
        doc["mode"] = sc.mode
    if sc.structure == "hwq":
        doc["capacity"] = sc.capacity
    if sc.alphabet is not None:
        doc["alphabet"] = list(sc.alphabet)
    if sc.schedule is not None:
        doc["schedule"] = list(sc.schedule)
    return doc


def load_scenario(path_or_name: str) -> Scenario:
    return scenario_from_json(read_document(path_or_name))


# -- JSON serialisation ----------------------------------------------------------


def dumps(doc: Any) -> str:
    """Canonical JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _abstract_json(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    return {"corrupt": str(getattr(value, "reason", value))}


def shared_json(shared: Any) -> dict:
    if isinstance(shared, treiber.NodeStore):
        return {
            "head": shared.head,
            "nodes": [[n.val, n.next] for n in shared.nodes],
            "freelist": list(shared.freelist),
        }
    if isinstance(shared, hwqueue.QueueStore):
        return {"q": list(shared.q), "last": shared.last}
    raise TypeError(f"cannot serialise shared state {type(shared).__name__}")


def proc_json(proc: ProcessState) -> dict:
    return {
        "pid": proc.pid,
        "opno": proc.opno,
        "op": proc.op,
        "arg": proc.arg,
        "pc": proc.pc,
        "locals": dict(proc.locals),
        "flag": proc.flag,
        "set_ind": proc.set_ind,
        "status": proc.status,
        "result": proc.result,
    }


def state_json(state: SystemState) -> dict:
    return {
        "shared": shared_json(state.shared),
        "abstract": _abstract_json(state.abstract),
        "procs": [proc_json(p) for p in state.procs],
    }


def step_json(step: Step) -> dict:
    return {
        "pid": step.pid,
        "label": step.label,
        "pre": state_json(step.pre),
        "post": state_json(step.post),
    }


def history_json(history: History) -> list:
    return [
        {
            "kind": ev.kind,
            "pid": ev.pid,
            "op": ev.op,
            "arg": ev.arg,
            "result": ev.result,
            "position": ev.position,
        }
        for ev in history.events
    ]


def verdict_json(verdict: Verdict) -> dict:
    if verdict.holds:
        return {"outcome": verdict.outcome}
    w = verdict.witness
    return {
        "outcome": verdict.outcome,
        "relation": w.relation,
        "kind": w.kind,
        "first": w.first,
        "last": w.last,
        "clause": w.clause,
    }


def process_verdicts_json(pv: ProcessVerdicts) -> dict:
    return {"pid": pv.pid, "guarantee": verdict_json(pv.guarantee), "rely": verdict_json(pv.rely)}


def trace_json(trace: Trace, row: Row | None = None) -> dict:
    doc: dict[str, Any] = {
        "id": trace.id,
        "status": trace.status,
        "schedule": list(trace.schedule),
        "steps": [step_json(s) for s in trace.steps],
        "history": history_json(project_history(trace)),
        "final": _abstract_json(trace.final.abstract),
    }
    if row is not None:
        doc["verdicts"] = {
            "linearisable": row.linearisable,
            "witness": None if row.witness is None else str(row.witness),
            "processes": [process_verdicts_json(p) for p in row.processes],
        }
    return doc


def report_json(sc: Scenario, report: CorrelationReport) -> dict:
    by_id = {row.trace_id: row for row in report.rows}
    return {
        "format": FORMAT,
        "scenario": scenario_to_json(sc),
        "traces": [
            trace_json(trace, by_id.get(tid)) for tid, trace in report.traces.items()
        ],
        "summary": report.summary(),
        "counterexamples": report.counterexamples,
    }


def scenario_of_report(doc: Any) -> Scenario:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT or "scenario" not in doc:
        raise ScenarioError('report: expected {"format": 1, "scenario": ..., "traces": ...}')
    return scenario_from_json(doc["scenario"])


def is_report(doc: Any) -> bool:
    return isinstance(doc, dict) and "traces" in doc and "scenario" in doc


# -- text rendering --------------------------------------------------------------


def render_list(values: Any) -> str:
    """Bracket notation; null slots show as ``-``."""
    if not isinstance(values, (tuple, list)):
        return f"⊥({getattr(values, 'reason', values)})"
    return "[" + ",".join("-" if v is None else str(v) for v in values) + "]"


def render_state(state: SystemState) -> str:
    """The abstract list; for the queue also the concrete array."""
    if isinstance(state.shared, hwqueue.QueueStore):
        return f"{render_list(state.shared.q)} last={state.shared.last}"
    return render_list(state.abstract)


def render_call(op: str, arg: Any) -> str:
    return f"{op}({arg})" if arg is not None else op


def render_step(k: int, step: Step) -> str:
    proc = step.pre.proc(step.pid)
    after = step.post.proc(step.pid)
    line = (
        f"{k:3d}  p{step.pid} {render_call(proc.op, proc.arg):8s} {step.label:8s}"
        f"{render_state(step.pre)} → {render_state(step.post)}"
    )
    if after.status == "returned" and proc.status != "returned" and proc.op in ("pop", "deq"):
        line += "   returns " + ("null" if after.result is None else str(after.result))
    return line


def queue_narrative(trace: Trace) -> list[str]:
    """One line per step that touches a slot: writes and swaps."""
    lines = []
    for step in trace.steps:
        before, after = step.pre.proc(step.pid), step.post.proc(step.pid)
        if step.label == "write":
            lines.append(f"enq({before.arg}) (inserts into slot {before.get('index')})")
        elif step.label == "swap":
            line = f"deq (checks slot {before.get('index')}"
            if after.status == "returned":
                line += f" - returns {after.result}"
            lines.append(line + ")")
    return lines


def render_trace(trace: Trace) -> list[str]:
    lines = [render_step(k, step) for k, step in enumerate(trace.steps)]
    lines.append(f"final: {render_list(trace.final.abstract)}  ({trace.status})")
    return lines


def render_witness(witness: LinWitness | None) -> str:
    return "-" if witness is None else str(witness)
