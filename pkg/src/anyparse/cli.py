"""Command-line harness: ``anyparse parse|replay|check``.

``parse``  runs a batch parse to quiescence, or an anytime demo in which a
consumer thread polls the producer and may stop early (first complete
analysis, or a deadline).  ``replay`` drives a scripted consumer against a
fresh producer and emits the merged consumer-view / transaction-log report
used by the verification suite; scripts triggered on transaction counts
replay deterministically, scripts triggered on wall-clock offsets run the
real threaded runtime.  ``check`` statically validates grammar and lexicon
files.

Exit codes: 0 = completed; 2 = unusable input files or configuration;
3 = stopped at the deadline with only the void result to show (which is
itself a meaningful outcome for the caller).

Reports go to stdout, one JSON object per line with ``--format jsonl``;
diagnostics and progress chatter go to stderr.  Timing fields are omitted
unless ``--timings`` is given so that deterministic runs stay
byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import grammar as gmod, runtime
from .anytime import (
    PacedStream,
    ParseProducer,
    ParseSnapshot,
    ScriptAction,
    StrategyParams,
    measure_granularity,
    render_forest,
    run_batch,
    run_lockstep,
)
from .grammar import GrammarError
from .runtime import Status

EXIT_OK = 0
EXIT_LOAD_ERROR = 2
EXIT_VOID_AT_DEADLINE = 3


def _snapshot_dict(snapshot: ParseSnapshot) -> dict:
    return {
        "analyses": [
            {
                "category": a.category,
                "start": a.start,
                "end": a.end,
                "score": a.score,
                "fs": a.fs_text,
                "complete": a.complete,
            }
            for a in snapshot.analyses
        ],
        "coverage": snapshot.coverage,
        "readings": snapshot.readings,
        "best_span": list(snapshot.best_span) if snapshot.best_span else None,
        "transactions": snapshot.transactions_executed,
        "input_consumed": snapshot.input_consumed,
        "finalized": snapshot.finalized,
        "void": snapshot.void,
    }


class _Reporter:
    def __init__(self, fmt: str, out=None):
        self.fmt = fmt
        self.out = out or sys.stdout

    def event(self, kind: str, **data) -> None:
        if self.fmt == "jsonl":
            print(json.dumps({"event": kind, **data}, sort_keys=True), file=self.out)
        else:
            pretty = " ".join(f"{k}={v}" for k, v in data.items())
            print(f"[{kind}] {pretty}", file=self.out)

    def snapshot(self, snapshot: ParseSnapshot, version: int | None = None) -> None:
        if self.fmt == "jsonl":
            data = _snapshot_dict(snapshot)
            if version is not None:
                data["version"] = version
            print(json.dumps({"event": "snapshot", **data}, sort_keys=True), file=self.out)
        else:
            tag = f" v{version}" if version is not None else ""
            print(f"-- snapshot{tag} --", file=self.out)
            self.out.write(render_forest(snapshot))


def _load(args) -> tuple[gmod.Grammar, gmod.Lattice]:
    try:
        rules = gmod.load_grammar(args.grammar)
        entries = gmod.load_lexicon(args.lexicon)
        lattice = gmod.load_lattice(args.lattice) if args.lattice else gmod.Lattice()
    except (GrammarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_LOAD_ERROR)
    return gmod.Grammar(rules, entries), lattice


def _params(args) -> StrategyParams:
    return StrategyParams(
        start_category=args.start,
        fragment_first=args.fragment_first,
        publish_every=args.publish_every,
        beam=args.beam,
    )


# ---------------------------------------------------------------------------
# parse
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    grammar, lattice = _load(args)
    params = _params(args)
    reporter = _Reporter(args.format)
    if args.mode == "batch":
        snapshot = run_batch(grammar, params, lattice)
        if args.format == "jsonl":
            reporter.snapshot(snapshot)
        else:
            sys.stdout.write(render_forest(snapshot))
        return EXIT_OK
    return _run_anytime(args, grammar, lattice, params, reporter)


def _run_anytime(args, grammar, lattice, params, reporter) -> int:
    producer = ParseProducer(grammar, params)
    stream = PacedStream(lattice.hypotheses, feed_interval_ms=args.feed_interval_ms)
    handle = runtime.start_process(producer.run, stream, name="anytime-parse")
    poll = max(args.poll_interval_ms, 1) / 1000.0
    deadline = None
    if args.deadline_ms is not None:
        deadline = time.monotonic() + args.deadline_ms / 1000.0
    last_version = 0
    deadline_hit = False
    final: ParseSnapshot | None = None
    while True:
        envelope = runtime.get_result(handle)
        if envelope.version != last_version:
            last_version = envelope.version
            if envelope.is_void:
                reporter.event("void", version=envelope.version)
            else:
                final = envelope.payload
                reporter.snapshot(final, version=envelope.version)
                if any(a.complete for a in final.analyses):
                    reporter.event("good-enough", transactions=final.transactions_executed)
                    break
        if final is not None and final.finalized and handle.status is Status.QUIESCENT:
            reporter.event("quiescent", transactions=final.transactions_executed)
            break
        if deadline is not None and time.monotonic() >= deadline:
            deadline_hit = True
            reporter.event("deadline")
            break
        time.sleep(poll)
    runtime.abort_process(handle).wait(timeout=10.0)
    if producer.log and args.timings:
        reporter.event("granularity", report=json.loads(measure_granularity(producer.log).to_json()))
    last = runtime.get_result(handle)
    if deadline_hit and last.is_void:
        reporter.event("void-result", exit=EXIT_VOID_AT_DEADLINE)
        return EXIT_VOID_AT_DEADLINE
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def _load_script(path) -> tuple[list[dict], bool]:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    actions = data.get("actions", [])
    wallclock = any("at_ms" in a for a in actions)
    last_offset = -1
    for action in actions:
        if "at_ms" in action:
            offset = action["at_ms"]
        elif "at_tx" in action:
            offset = action["at_tx"]
        else:
            raise GrammarError("script action needs 'at_ms' or 'at_tx'")
        if offset < last_offset:
            raise GrammarError("script offsets must be non-decreasing")
        last_offset = offset
        if action.get("do") not in ("poll", "abort", "reset"):
            raise GrammarError(f"unknown script action {action.get('do')!r}")
        if action["do"] == "reset" and "lattice" not in action:
            raise GrammarError("a reset action needs a 'lattice' file")
        if wallclock and "at_tx" in action:
            raise GrammarError("a script mixes 'at_ms' and 'at_tx' triggers")
    return actions, wallclock


def cmd_replay(args) -> int:
    grammar, lattice = _load(args)
    params = _params(args)
    reporter = _Reporter(args.format)
    try:
        actions, wallclock = _load_script(args.script)
    except (GrammarError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    try:
        resets = {
            id(a): gmod.load_lattice(a["lattice"]) for a in actions if a["do"] == "reset"
        }
    except (GrammarError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    if wallclock:
        return _replay_wallclock(args, grammar, lattice, params, actions, resets, reporter)
    return _replay_lockstep(args, grammar, lattice, params, actions, resets, reporter)


def _replay_lockstep(args, grammar, lattice, params, actions, resets, reporter) -> int:
    script = [
        ScriptAction(
            at_tx=a["at_tx"],
            action=a["do"],
            payload=resets[id(a)].hypotheses if a["do"] == "reset" else None,
        )
        for a in actions
    ]
    result = run_lockstep(grammar, params, lattice, script=script)
    for obs in result.ctx.observations:
        if obs.snapshot is None:
            reporter.event("observed", at_tx=obs.at_tx, action=obs.action, result="void")
        else:
            reporter.event(
                "observed",
                at_tx=obs.at_tx,
                action=obs.action,
                transactions=obs.snapshot.transactions_executed,
                analyses=len(obs.snapshot.analyses),
                coverage=obs.snapshot.coverage,
            )
    for record in result.log:
        reporter.event("transaction", **json.loads(record.to_json(include_timings=args.timings)))
    if result.final_snapshot is not None:
        reporter.snapshot(result.final_snapshot)
    return EXIT_OK


def _replay_wallclock(args, grammar, lattice, params, actions, resets, reporter) -> int:
    producer = ParseProducer(grammar, params)
    stream = PacedStream(lattice.hypotheses, feed_interval_ms=args.feed_interval_ms)
    handle = runtime.start_process(producer.run, stream, name="replay")
    started = time.monotonic()
    aborted = False
    for action in actions:
        due = started + action["at_ms"] / 1000.0
        delay = due - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        if action["do"] == "poll":
            envelope = runtime.get_result(handle)
            if envelope.is_void:
                reporter.event("observed", at_ms=action["at_ms"], action="poll", result="void")
            else:
                reporter.event(
                    "observed",
                    at_ms=action["at_ms"],
                    action="poll",
                    version=envelope.version,
                    transactions=envelope.payload.transactions_executed,
                    analyses=len(envelope.payload.analyses),
                )
        elif action["do"] == "abort":
            ack = runtime.abort_process(handle)
            ack.wait(timeout=10.0)
            aborted = True
            reporter.event(
                "observed",
                at_ms=action["at_ms"],
                action="abort",
                enqueued_after_tx=ack.enqueued_after_tx,
                final_tx=handle.transactions,
            )
        elif action["do"] == "reset":
            ack = runtime.reset_process(handle, resets[id(action)].hypotheses)
            ack.wait(timeout=10.0)
            reporter.event("observed", at_ms=action["at_ms"], action="reset")
    if not aborted:
        deadline = time.monotonic() + 30.0
        while handle.status is not Status.QUIESCENT and time.monotonic() < deadline:
            time.sleep(0.005)
        runtime.abort_process(handle).wait(timeout=10.0)
    for record in producer.log:
        reporter.event("transaction", **json.loads(record.to_json(include_timings=args.timings)))
    envelope = runtime.get_result(handle)
    if not envelope.is_void:
        reporter.snapshot(envelope.payload, version=envelope.version)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        grammar_text = open(args.grammar, encoding="utf-8").read()
        lexicon_text = open(args.lexicon, encoding="utf-8").read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    rules, entries, diagnostics = gmod.collect_load_diagnostics(
        grammar_text, lexicon_text, str(args.grammar), str(args.lexicon)
    )
    for diagnostic in diagnostics:
        print(diagnostic.format(args.grammar), file=sys.stderr)
    errors = sum(1 for d in diagnostics if d.level == "error")
    print(
        f"{len(rules)} rules, {sum(len(v) for v in gmod.Grammar(rules, entries).lexicon.values())} "
        f"lexical entries, {errors} errors, {len(diagnostics) - errors} warnings"
    )
    return EXIT_OK if errors == 0 else EXIT_LOAD_ERROR


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, lattice_required: bool = True) -> None:
    parser.add_argument("--grammar", required=True, help="grammar file")
    parser.add_argument("--lexicon", required=True, help="lexicon file")
    parser.add_argument("--lattice", required=lattice_required, help="lattice file")
    parser.add_argument("--start", required=True, help="start category")
    parser.add_argument("--fragment-first", action="store_true")
    parser.add_argument("--publish-every", type=int, default=1)
    parser.add_argument("--beam", type=int, default=None)
    parser.add_argument("--feed-interval-ms", type=float, default=0.0)
    parser.add_argument("--format", choices=("text", "jsonl"), default="text")
    parser.add_argument("--timings", action="store_true", help="include wall-clock fields")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anyparse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_parse = sub.add_parser("parse", help="batch parse or anytime demo")
    _add_common(p_parse)
    p_parse.add_argument("--mode", choices=("batch", "anytime"), default="batch")
    p_parse.add_argument("--poll-interval-ms", type=float, default=10.0)
    p_parse.add_argument("--deadline-ms", type=float, default=None)
    p_parse.set_defaults(func=cmd_parse)

    p_replay = sub.add_parser("replay", help="drive a scripted consumer")
    _add_common(p_replay)
    p_replay.add_argument("--script", required=True, help="JSON consumer script")
    p_replay.set_defaults(func=cmd_replay)

    p_check = sub.add_parser("check", help="validate grammar and lexicon")
    p_check.add_argument("--grammar", required=True)
    p_check.add_argument("--lexicon", required=True)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "poll_interval_ms", 1.0) < 1.0 and getattr(args, "mode", "") == "anytime":
        print("error: --poll-interval-ms must be >= 1 in anytime mode", file=sys.stderr)
        return EXIT_LOAD_ERROR
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    raise SystemExit(main())
