"""Command-line driver.

    protolab run <scenario> [--spec ...] [--level ...] [--trace-out PATH] [--no-ghost]
    protolab explore <scenario> [--spec ...] [--max-steps N] [--workers N]
                     [--trace-out PATH] [--no-ghost]
    protolab replay <trace>

Exit codes: 0 all requested specs hold, 1 a spec is violated (run) or a
counterexample was found (explore) or a replay diverged, 2 malformed input,
3 exploration inconclusive (step bound cut live branches).

Output is byte-stable: identical inputs and flags produce identical traces
and identical stdout.
"""

from __future__ import annotations

import argparse
import sys

from .crypto import abstract_of
from .runner import execute_schedule, execute_scripted, replay_doc, schedule_from_doc
from .scenario import ScenarioError, load_scenario, parse_scenario
from .search import SPEC_CHOICES, explore
from .specs import check_lemma_suite, evaluate_run_specs, resolve_spec_names
from .trace import TraceError, parse_trace, render_trace

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_MALFORMED = 2
EXIT_INCONCLUSIVE = 3


def _verdict_line(verdict) -> str:
    suffix = f' detail="{verdict.detail}"' if verdict.detail else ""
    return f"verdict spec={verdict.spec} holds={str(verdict.holds).lower()}{suffix}"


def _emit_trace(text: str, trace_out: str | None, out) -> None:
    if trace_out:
        with open(trace_out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        out.write(text)


def cmd_run(args, out, err) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.level:
            scenario = scenario.with_level(args.level)
        if scenario.intruder.kind == "search":
            raise ScenarioError("intruder: 'run' executes scripted scenarios; use 'explore'")
        run = execute_scripted(scenario)
        verdicts = evaluate_run_specs(run, resolve_spec_names(args.spec))
        text = render_trace(run.to_doc(verdicts), no_ghost=args.no_ghost)
        _emit_trace(text, args.trace_out, out)
    except (ScenarioError, FileNotFoundError, ValueError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    if args.trace_out:
        for verdict in verdicts:
            out.write(_verdict_line(verdict) + "\n")
    failed = any(not v.holds and not v.rely_broken for v in verdicts)
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_explore(args, out, err) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.level and args.level != "abstract":
            raise ScenarioError("level: exploration runs at the abstract level")
        if args.max_steps is not None:
            scenario = scenario.with_max_steps(args.max_steps)
        verdict = explore(scenario, spec=args.spec, workers=args.workers)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    out.write(f"states explored: {verdict.states}\n")
    out.write(_verdict_line(verdict) + "\n")
    if verdict.inconclusive:
        return EXIT_INCONCLUSIVE
    if verdict.holds:
        return EXIT_OK
    run = verdict.counterexample
    text = render_trace(run.to_doc([verdict]), no_ghost=args.no_ghost)
    try:
        _emit_trace(text, args.trace_out, out)
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    return EXIT_VIOLATION


def cmd_replay(args, out, err) -> int:
    try:
        with open(args.trace, "r", encoding="utf-8") as handle:
            doc = parse_trace(handle.read())
    except (TraceError, FileNotFoundError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    try:
        divergence, run = replay_doc(doc)
    except (TraceError, ScenarioError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    if divergence is not None:
        out.write(f"replay diverged at event {divergence}\n")
        return EXIT_VIOLATION
    reports = check_lemma_suite(run)
    failing = [r for r in reports if not r.holds]
    if failing:
        out.write(f"replay obligation failed: {failing[0].name}: {failing[0].witness}\n")
        return EXIT_VIOLATION
    recorded_specs = [spec for spec, _, _ in doc.verdicts if spec in ("post-ns", "nsl-ft", "inv")]
    if recorded_specs:
        recomputed = {v.spec: v.holds for v in evaluate_run_specs(run, recorded_specs)}
        for spec, holds, _ in doc.verdicts:
            if spec in recomputed and recomputed[spec] != holds:
                out.write(f"replay verdict mismatch for {spec}\n")
                return EXIT_VIOLATION
    if doc.level == "concrete":
        # the wire run must project onto its recipient-field twin exactly
        scenario = parse_scenario(doc.scenario_text)
        twin = execute_schedule(scenario, schedule_from_doc(doc, scenario), level="abstract")
        projected = abstract_of(run.final_state.history, run.registry)
        if projected != twin.final_state.history or run.final_state.users != twin.final_state.users:
            out.write("replay refinement mismatch between levels\n")
            return EXIT_VIOLATION
    out.write(f"replay ok: {len(run.events)} events verified\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protolab",
        description="Run, explore and replay symbolic protocol scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scripted scenario")
    run_p.add_argument("scenario")
    run_p.add_argument("--spec", choices=SPEC_CHOICES, default="all")
    run_p.add_argument("--level", choices=("abstract", "concrete"), default=None)
    run_p.add_argument("--trace-out", default=None)
    run_p.add_argument("--no-ghost", action="store_true")

    explore_p = sub.add_parser("explore", help="bounded exhaustive search")
    explore_p.add_argument("scenario")
    explore_p.add_argument("--spec", choices=SPEC_CHOICES, default="all")
    explore_p.add_argument("--level", choices=("abstract", "concrete"), default=None)
    explore_p.add_argument("--max-steps", type=int, default=None)
    explore_p.add_argument("--workers", type=int, default=1)
    explore_p.add_argument("--trace-out", default=None)
    explore_p.add_argument("--no-ghost", action="store_true")

    replay_p = sub.add_parser("replay", help="re-execute and verify a trace")
    replay_p.add_argument("trace")
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args, out, err)
    if args.command == "explore":
        return cmd_explore(args, out, err)
    return cmd_replay(args, out, err)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
