"""Command-line front end: ``rglin explore|check|replay|correlate``.

Exit codes: 0 success, 1 a requested check was violated (``check``) or the
schedule was not replayable (``replay``), 2 bad input (schema, JSON, unknown
relation), 3 the exploration exceeded the trace cap (``RGLIN_TRACE_CAP``).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from . import report as rep
from .core import DisabledTransition, Trace
from .explorer import (
    CorrelationReport,
    Scenario,
    TraceCapExceeded,
    correlate,
    iter_traces,
    replay,
)
from .linearise import is_linearisable, project_history
from .relations import RelationSpec, Verdict, relation

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_CAP = 3

# Verdict lines and counterexamples beyond this many are summarised.
SHOWN = 20


class UsageError(ValueError):
    pass


def _relations(ids: Sequence[str] | None) -> list[RelationSpec] | None:
    if ids is None:
        return None
    try:
        return [relation(name) for name in ids]
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _with_mode(sc: Scenario, mode: str | None) -> Scenario:
    if mode is None:
        return sc
    if not sc.structure.startswith("treiber"):
        raise UsageError("--mode applies to Treiber scenarios only")
    return dataclasses.replace(sc, mode=mode)


def _schedule(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"schedule must be comma-separated pids, got {text!r}")


def _write(path: str | None, doc) -> None:
    text = rep.dumps(doc) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _describe(sc: Scenario) -> str:
    procs = " ∥ ".join(
        "; ".join(rep.render_call(op, arg) for op, arg in ops) for ops in sc.processes
    )
    label = f"{sc.name}: " if sc.name else ""
    return f"{label}{sc.structure} from {rep.render_list(sc.initial)}, {procs or 'no processes'}"


# -- explore ------------------------------------------------------------------------


def cmd_explore(args) -> int:
    sc = _with_mode(rep.load_scenario(args.scenario), args.mode)
    guars, relies = _relations(args.guar), _relations(args.rely)
    result = correlate(iter_traces(sc), guars, relies, sc.spec, sc.values)
    summary = result.summary()
    print(
        f"{_describe(sc)}: {summary['traces']} traces, {summary['truncated']} not complete",
        file=sys.stderr,
    )
    _write(args.output, rep.report_json(sc, result))
    return EXIT_OK


# -- check ----------------------------------------------------------------------------


def _traces_to_check(doc, mode) -> tuple[Scenario, list[Trace] | None]:
    """(scenario, fixed traces) - ``None`` traces means explore everything."""
    if rep.is_report(doc):
        sc = _with_mode(rep.scenario_of_report(doc), mode)
        traces = []
        for entry in doc["traces"]:
            trace = replay(sc, tuple(entry["schedule"]))
            traces.append(dataclasses.replace(trace, id=entry.get("id", trace.id)))
        return sc, traces
    sc = _with_mode(rep.scenario_from_json(doc), mode)
    if sc.schedule is not None:
        return sc, [replay(sc)]
    return sc, None


def _violation_lines(trace: Trace, verdict: Verdict) -> list[str]:
    w = verdict.witness
    if w.kind == "step":
        step = trace.steps[w.first]
        where = f"at step {w.first} ({step.label})"
    else:
        where = f"over steps {w.first}..{w.last}"
    what = "guarantee" if w.relation.startswith("guar") else "rely"
    return [
        f"  {w.relation} ({what}) violated by p{w.pid} {where}: "
        f"{rep.render_state(w.pre)} → {rep.render_state(w.post)}",
        f"    clause: {w.clause}",
    ]


def cmd_check(args) -> int:
    doc = rep.read_document(args.input)
    sc, fixed = _traces_to_check(doc, args.mode)
    guars, relies = _relations(args.guar), _relations(args.rely)
    want_lin = args.lin
    if guars is None and relies is None and not want_lin:
        guars = relies = None  # the operations' own relations
        want_lin = True
        default_relations = True
    else:
        guars, relies = guars or [], relies or []
        default_relations = False
    traces = fixed if fixed is not None else iter_traces(sc)
    print(_describe(sc))
    failures = shown = total = 0
    for trace in traces:
        total += 1
        result = correlate([trace], guars, relies, sc.spec, sc.values)
        row = result.rows[0]
        bad_rg = not (row.guarantees_hold and row.relies_hold)
        bad_lin = want_lin and not row.linearisable
        failures += bad_rg or bad_lin
        if shown >= SHOWN and not (bad_rg or bad_lin):
            continue
        if shown >= SHOWN * 2:
            continue
        shown += 1
        verdict = "ok" if not bad_rg else "VIOLATED"
        line = f"{trace.id}  schedule {','.join(map(str, trace.schedule)) or '-'}  "
        line += f"final {rep.render_list(trace.final.abstract)}  rely/guarantee: {verdict}"
        print(line)
        for pv in row.processes:
            for v in (pv.guarantee, pv.rely):
                if not v.holds:
                    print("\n".join(_violation_lines(trace, v)))
        if want_lin:
            if row.linearisable:
                print(f"  lin: yes  witness: {rep.render_witness(row.witness)}")
            else:
                print("  lin: NO")
    checked = "default guarantees/relies and lin" if default_relations else "requested checks"
    print(f"{total} trace(s), {failures} with a failed check ({checked})")
    return EXIT_VIOLATION if failures else EXIT_OK


# -- replay ----------------------------------------------------------------------------


def cmd_replay(args) -> int:
    sc = _with_mode(rep.load_scenario(args.scenario), args.mode)
    schedule = args.schedule if args.schedule is not None else sc.schedule
    if schedule is None:
        raise UsageError("no schedule: give --schedule or put one in the scenario")
    try:
        trace = replay(sc, schedule)
    except DisabledTransition as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"{_describe(sc)}; schedule {','.join(map(str, schedule)) or '-'}")
    for line in rep.render_trace(trace):
        print(line)
    if sc.structure == "hwq":
        print("narrative:")
        for line in rep.queue_narrative(trace):
            print(f"  {line}")
    ok, witness = is_linearisable(project_history(trace), sc.spec, sc.values)
    print(f"lin: {'yes' if ok else 'NO'}  witness: {rep.render_witness(witness)}")
    if args.output:
        result = correlate([trace], None, None, sc.spec, sc.values)
        _write(args.output, rep.report_json(sc, result))
    return EXIT_OK


# -- correlate -------------------------------------------------------------------------


def print_table(result: CorrelationReport) -> None:
    s = result.summary()
    print(f"{'':18s}{'guar holds':>12s}{'guar violated':>15s}")
    print(f"{'linearisable':18s}{s['lin_and_guar']:12d}{s['lin_and_violation']:15d}")
    print(f"{'not linearisable':18s}{s['nonlin_and_guar']:12d}{s['nonlin_and_violation']:15d}")
    print(f"traces: {s['traces']}  not complete: {s['truncated']}  rely violations: {s['rely_violations']}")


def _history_text(trace: Trace) -> str:
    ops = project_history(trace).operations()
    parts = []
    for op in ops:
        shown = str(op) if not op.pending else f"{rep.render_call(op.op, op.arg)}…"
        parts.append(f"p{op.pid}:{shown}")
    return " ".join(parts)


def cmd_correlate(args) -> int:
    sc = _with_mode(rep.load_scenario(args.scenario), args.mode)
    guars, relies = _relations(args.guar), _relations(args.rely)
    traces = iter_traces(sc) if sc.processes else iter(())
    result = correlate(traces, guars, relies, sc.spec, sc.values, keep_traces=False)
    print(_describe(sc))
    print_table(result)
    ids = result.counterexamples
    print(f"counterexamples (not linearisable although all guarantees hold): {len(ids)}")
    rows = {r.trace_id: r for r in result.rows}
    examples = {}
    for tid in ids[: args.examples]:
        trace = dataclasses.replace(replay(sc, rows[tid].schedule), id=tid)
        examples[tid] = trace
        if len(examples) <= SHOWN:
            print(
                f"  {tid}  schedule {','.join(map(str, trace.schedule))}  "
                f"{_history_text(trace)}  final {rep.render_list(trace.final.abstract)}"
            )
    if len(ids) > SHOWN:
        print(f"  ... {len(ids) - SHOWN} more (all ids are listed in the -o report)")
    if args.output:
        result.traces = examples
        doc = rep.report_json(sc, result)
        doc["rows"] = [
            {
                "id": r.trace_id,
                "schedule": list(r.schedule),
                "status": r.status,
                "linearisable": r.linearisable,
                "guarantees_hold": r.guarantees_hold,
                "relies_hold": r.relies_hold,
            }
            for r in result.rows
        ]
        _write(args.output, doc)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rglin",
        description="Bounded exhaustive rely/guarantee and linearisability checking "
        "for the Treiber stack and the Herlihy-Wing queue.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, relations=True):
        p.add_argument("--mode", choices=["fresh-ids", "reuse"], help="node-id policy (Treiber)")
        if relations:
            p.add_argument("--guar", nargs="+", metavar="ID", help="guarantee relation ids")
            p.add_argument("--rely", nargs="+", metavar="ID", help="rely relation ids")

    p = sub.add_parser("explore", help="enumerate every interleaving and write a report")
    p.add_argument("scenario", help="scenario file or canned scenario name")
    p.add_argument("-o", "--output", help="report path (default: stdout)")
    common(p)
    p.set_defaults(run=cmd_explore)

    p = sub.add_parser("check", help="check relations/linearisability on a scenario or report")
    p.add_argument("input", help="scenario file, report file, or canned scenario name")
    p.add_argument("--lin", action="store_true", help="also decide linearisability")
    common(p)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("replay", help="print the trace a schedule produces")
    p.add_argument("scenario", help="scenario file or canned scenario name")
    p.add_argument("--schedule", type=_schedule, help="comma-separated pids (default: the scenario's)")
    p.add_argument("-o", "--output", help="also write a one-trace report")
    common(p, relations=False)
    p.set_defaults(run=cmd_replay)

    p = sub.add_parser("correlate", help="tabulate linearisability against guarantee verdicts")
    p.add_argument("scenario", help="scenario file or canned scenario name")
    p.add_argument("-o", "--output", help="report path")
    p.add_argument(
        "--examples", type=int, default=100, metavar="N",
        help="counterexample traces to replay in full (default 100)",
    )
    common(p)
    p.set_defaults(run=cmd_correlate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (rep.ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TraceCapExceeded as exc:
        print(f"error: {exc} (set RGLIN_TRACE_CAP to raise it)", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
