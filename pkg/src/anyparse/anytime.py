"""Binding the chart parser into the producer/consumer runtime.

:class:`ParseProducer` is the producer procedure: it runs one chart
transaction at a time, publishes a :class:`ParseSnapshot` of the best
analyses so far, and polls for consumer instructions after every
transaction.  Because the poll sits on a transaction boundary, an abort
costs the consumer at most one further transaction, and a snapshot never
exposes a half-built analysis.

Snapshots report both growth directions: *breadth* (how much of the
lattice's time span the best non-overlapping set of fragments covers) and
*depth* (how many distinct readings exist over the best-covered span).
With ``fragment_first`` enabled, the producer additionally publishes the
moment any grammatical fragment completes, so a consumer in a hurry gets
partial constituents long before the first full-utterance analysis exists.

The same producer procedure runs in two harnesses: threaded, under
:mod:`anyparse.runtime`, for real concurrent consumers; or *lockstep*,
under :class:`ScriptedContext`, where consumer actions fire at exact
transaction counts and whole runs are reproducible byte for byte.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field

from .chart import Edge, ParserState, TransactionOutcome
from .grammar import Grammar, Lattice, WordHypothesis
from .runtime import CONTINUE, STOP_NOW, ProducerContext, ResetWith

DEFAULT_WINDOW_MS = 500.0


@dataclass(frozen=True)
class StrategyParams:
    """Knobs of the anytime strategy.

    ``publish_every`` is the number of transactions between publications
    (1 = publish at every goal state); completed start-category edges, and
    under ``fragment_first`` any completed fragment, always publish
    immediately.  ``beam`` optionally caps the agenda width (best-first
    pruning; sacrifices completeness).
    """

    start_category: str
    fragment_first: bool = False
    publish_every: int = 1
    beam: int | None = None

    def __post_init__(self) -> None:
        if self.publish_every < 1:
            raise ValueError("publish_every must be >= 1")


@dataclass(frozen=True)
class Analysis:
    """One reportable passive edge."""

    category: str
    start: int
    end: int
    score: float
    fs_text: str
    complete: bool
    edge_id: int


@dataclass(frozen=True)
class ParseSnapshot:
    """Consumer-visible parsing result; deep-immutable.

    ``void`` marks only the value a slot holds before anything was ever
    published; snapshots assembled by a producer always have
    ``void=False``, even when they carry no analyses yet.
    """

    run_id: str
    start_category: str
    analyses: tuple[Analysis, ...]
    coverage: float
    readings: int
    best_span: tuple[int, int] | None
    transactions_executed: int
    input_consumed: int
    finalized: bool
    void: bool = False


@dataclass(frozen=True)
class TransactionRecord:
    """One line of the producer's machine-readable transaction log."""

    seq: int
    kind: str
    duration_ns: int
    edges_added: int
    failures: int
    published: bool

    def to_json(self, include_timings: bool = True) -> str:
        data = {
            "seq": self.seq,
            "kind": self.kind,
            "edges_added": self.edges_added,
            "failures": self.failures,
            "published": self.published,
        }
        if include_timings:
            data["duration_ns"] = self.duration_ns
        return json.dumps(data, sort_keys=True)


# ---------------------------------------------------------------------------
# Snapshot assembly
# ---------------------------------------------------------------------------


def _reportable_passive_edges(state: ParserState) -> list[Edge]:
    """Passive edges as a consumer should see them right now.

    Refined edges stand in for their originals; analyses already known to
    be inconsistent with the deferred constraints are dropped.  Edges whose
    finalization simply has not run yet remain valid partial analyses.
    """
    edges: list[Edge] = []
    for edge in state.chart.passive_edges():
        if edge.id in state.final_inconsistent:
            continue
        refined_id = state.refined.get(edge.id)
        edges.append(state.chart.get(refined_id) if refined_id is not None else edge)
    return edges


def _best_cover(edges: list[Edge]) -> tuple[int, list[Edge]]:
    """Maximum-coverage non-overlapping fragment set.

    Dynamic programming over interval spans (maximizing total covered
    length), so adding edges can never shrink the achievable coverage.
    Each distinct span is represented by its best-scored edge.
    """
    by_span: dict[tuple[int, int], Edge] = {}
    for edge in edges:
        span = (edge.start, edge.end)
        cur = by_span.get(span)
        if cur is None or (edge.score, -edge.id) > (cur.score, -cur.id):
            by_span[span] = edge
    spans = sorted(by_span, key=lambda s: (s[1], s[0]))
    if not spans:
        return 0, []
    best_len = [0] * (len(spans) + 1)
    takes: list[bool] = [False] * len(spans)
    prev_index = [0] * len(spans)
    for i, (start, end) in enumerate(spans):
        # last span (by sort order) ending at or before `start`
        p = 0
        for j in range(i - 1, -1, -1):
            if spans[j][1] <= start:
                p = j + 1
                break
        prev_index[i] = p
        include = best_len[p] + (end - start)
        if include >= best_len[i]:
            best_len[i + 1] = include
            takes[i] = True
        else:
            best_len[i + 1] = best_len[i]
    chosen: list[Edge] = []
    i = len(spans)
    while i > 0:
        if takes[i - 1]:
            chosen.append(by_span[spans[i - 1]])
            i = prev_index[i - 1]
        else:
            i -= 1
    chosen.sort(key=lambda e: (-e.score, e.id))
    return best_len[len(spans)], chosen


def assemble_snapshot(
    state: ParserState, params: StrategyParams, run_id: str
) -> ParseSnapshot:
    """Build the consumer-visible result from the current chart.

    Must be called between transactions only; the result shares nothing
    mutable with the parser.
    """
    passive = _reportable_passive_edges(state)
    span = state.lattice_span()
    span_length = (span[1] - span[0]) if span else 0

    covered_length, cover = _best_cover(passive)
    coverage = (covered_length / span_length) if span_length else 0.0

    start_cat = [e for e in passive if e.category == params.start_category]
    analyses_edges: dict[int, Edge] = {e.id: e for e in start_cat}
    if params.fragment_first:
        for edge in cover:
            analyses_edges.setdefault(edge.id, edge)

    best_span: tuple[int, int] | None = None
    readings = 0
    if start_cat:
        best_span = max(
            ((e.start, e.end) for e in start_cat),
            key=lambda s: (s[1] - s[0], -s[0]),
        )
        readings = sum(1 for e in start_cat if (e.start, e.end) == best_span)

    analyses = tuple(
        Analysis(
            category=e.category,
            start=e.start,
            end=e.end,
            score=e.score,
            fs_text=e.fs.render(),
            complete=(
                e.category == params.start_category
                and span is not None
                and (e.start, e.end) == span
            ),
            edge_id=e.id,
        )
        for e in sorted(analyses_edges.values(), key=lambda e: (-e.score, e.id))
    )
    return ParseSnapshot(
        run_id=run_id,
        start_category=params.start_category,
        analyses=analyses,
        coverage=coverage,
        readings=readings,
        best_span=best_span,
        transactions_executed=state.transactions,
        input_consumed=state.input_consumed,
        finalized=state.finalized,
    )


def depth_breadth_delta(prev: ParseSnapshot, next: ParseSnapshot) -> tuple[float, int]:
    """(breadth_gain, depth_gain) between two snapshots of one run.

    Breadth is the coverage difference; depth counts new readings over the
    span that was best in ``prev`` (all of ``next``'s readings if ``prev``
    had none yet).
    """
    if prev.run_id != next.run_id:
        raise ValueError("snapshots come from different producer runs")
    breadth_gain = next.coverage - prev.coverage
    if prev.best_span is None:
        return breadth_gain, next.readings
    over_prev = sum(
        1
        for a in next.analyses
        if a.category == next.start_category and (a.start, a.end) == prev.best_span
    )
    return breadth_gain, over_prev - prev.readings


def render_forest(snapshot: ParseSnapshot) -> str:
    """Canonical, id-free text of a snapshot's analyses.

    Sorted by content so that two runs that derived the same information
    render byte-identically regardless of edge numbering.
    """
    lines = [
        f"{a.category} {a.start}-{a.end} score={a.score!r} "
        f"complete={'yes' if a.complete else 'no'} {a.fs_text}"
        for a in sorted(
            snapshot.analyses,
            key=lambda a: (-a.score, a.start, a.end, a.category, a.fs_text),
        )
    ]
    header = (
        f"analyses={len(snapshot.analyses)} coverage={snapshot.coverage!r} "
        f"readings={snapshot.readings} finalized={'yes' if snapshot.finalized else 'no'}"
    )
    return "\n".join([header] + lines) + "\n"


# ---------------------------------------------------------------------------
# Result production granularity
# ---------------------------------------------------------------------------

_BUCKETS_MS = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class GranularityReport:
    """How often the producer reaches a goal state with an extractable result.

    ``expected_per_window`` says how many further publications a consumer
    can expect in exchange for waiting another ``window_ms`` milliseconds
    at the measured mean transaction length.
    """

    count: int
    mean_ms: float
    max_ms: float
    histogram: dict[str, int]
    per_kind: dict[str, int]
    per_kind_mean_ms: dict[str, float]
    window_ms: float
    expected_per_window: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "count": self.count,
                "mean_ms": self.mean_ms,
                "max_ms": self.max_ms,
                "histogram": self.histogram,
                "per_kind": self.per_kind,
                "per_kind_mean_ms": self.per_kind_mean_ms,
                "window_ms": self.window_ms,
                "expected_per_window": self.expected_per_window,
            },
            sort_keys=True,
        )


def measure_granularity(
    records: list[TransactionRecord], window_ms: float = DEFAULT_WINDOW_MS
) -> GranularityReport:
    """Aggregate a transaction log into a granularity report."""
    if not records:
        raise ValueError("cannot measure granularity of an empty transaction log")
    durations_ms = [r.duration_ns / 1e6 for r in records]
    mean_ms = sum(durations_ms) / len(durations_ms)
    histogram: dict[str, int] = {}
    for value in durations_ms:
        for bound in _BUCKETS_MS:
            if value < bound:
                key = f"<{bound}ms"
                break
        else:
            key = f">={_BUCKETS_MS[-1]}ms"
        histogram[key] = histogram.get(key, 0) + 1
    per_kind: dict[str, int] = {}
    per_kind_total: dict[str, float] = {}
    for record, duration in zip(records, durations_ms):
        per_kind[record.kind] = per_kind.get(record.kind, 0) + 1
        per_kind_total[record.kind] = per_kind_total.get(record.kind, 0.0) + duration
    per_kind_mean = {k: per_kind_total[k] / per_kind[k] for k in per_kind}
    return GranularityReport(
        count=len(records),
        mean_ms=mean_ms,
        max_ms=max(durations_ms),
        histogram=histogram,
        per_kind=per_kind,
        per_kind_mean_ms=per_kind_mean,
        window_ms=window_ms,
        expected_per_window=window_ms / mean_ms if mean_ms > 0 else float("inf"),
    )


# ---------------------------------------------------------------------------
# The producer procedure
# ---------------------------------------------------------------------------


class PacedStream:
    """A lattice delivered hypothesis by hypothesis, optionally over time."""

    def __init__(self, hypotheses, feed_interval_ms: float = 0.0):
        self._items: list[WordHypothesis] = list(hypotheses)
        self._interval = feed_interval_ms / 1000.0
        self._next = 0
        self._started_at: float | None = None

    def ready(self) -> bool:
        if self.exhausted():
            return False
        if self._interval <= 0:
            return True
        if self._started_at is None:
            self._started_at = time.monotonic()
        due = self._started_at + self._next * self._interval
        return time.monotonic() >= due

    def next(self) -> WordHypothesis:
        item = self._items[self._next]
        self._next += 1
        return item

    def exhausted(self) -> bool:
        return self._next >= len(self._items)


def _as_stream(lattice_input) -> PacedStream:
    if isinstance(lattice_input, PacedStream):
        return lattice_input
    if isinstance(lattice_input, Lattice):
        return PacedStream(lattice_input.hypotheses)
    if lattice_input is None:
        return PacedStream([])
    return PacedStream(lattice_input)


class ParseProducer:
    """The anytime parsing producer.

    One instance may be run several times (the runtime re-invokes ``run``
    after a reset); every invocation gets a fresh parser state and a fresh
    ``run_id``.  The transaction log and the list of published snapshots
    accumulate across invocations and may be read once the producer has
    terminated or gone quiescent.
    """

    def __init__(self, grammar: Grammar, params: StrategyParams, name: str = "parse"):
        self.grammar = grammar
        self.params = params
        self.name = name
        self.runs = 0
        self.log: list[TransactionRecord] = []
        self.published: list[ParseSnapshot] = []
        self.state: ParserState | None = None

    def run(self, ctx, lattice_input) -> None:
        """Producer procedure; also usable under a :class:`ScriptedContext`."""
        self.runs += 1
        run_id = f"{self.name}:{self.runs}:{uuid.uuid4().hex[:8]}"
        state = ParserState(self.grammar, beam=self.params.beam)
        self.state = state
        stream = _as_stream(lattice_input)
        since_publish = 0
        last_published_tx: int | None = None

        def publish() -> None:
            nonlocal since_publish, last_published_tx
            snapshot = assemble_snapshot(state, self.params, run_id)
            ctx.set_result(snapshot)
            self.published.append(snapshot)
            since_publish = 0
            last_published_tx = state.transactions

        while True:
            if stream.exhausted():
                if not state.input_ended:
                    state.end_input()
            elif stream.ready():
                state.feed(stream.next())
            if state.agenda_empty:
                if not state.input_ended:
                    # Paced input: idle politely, but stay interruptible.
                    directive = ctx.check_status()
                    if directive is STOP_NOW or isinstance(directive, ResetWith):
                        return
                    time.sleep(0.0005)
                    continue
                if not state.finalization_scheduled:
                    state.finalize_utterance()
                    continue
                if last_published_tx != state.transactions or not self.published:
                    publish()
                return  # quiescent; the runtime parks us for late messages

            outcome = state.step()
            ctx.note_transaction()
            since_publish += 1
            published = self._should_publish(outcome, since_publish)
            if published:
                publish()
            self.log.append(
                TransactionRecord(
                    seq=len(self.log) + 1,
                    kind=outcome.kind,
                    duration_ns=outcome.duration_ns,
                    edges_added=len(outcome.edges_added),
                    failures=outcome.failures,
                    published=published,
                )
            )
            directive = ctx.check_status()
            if directive is STOP_NOW or isinstance(directive, ResetWith):
                return

    def _should_publish(self, outcome: TransactionOutcome, since_publish: int) -> bool:
        if since_publish >= self.params.publish_every:
            return True
        state = self.state
        assert state is not None
        for edge_id in outcome.edges_added:
            edge = state.chart.get(edge_id)
            if not edge.is_passive:
                continue
            if edge.category == self.params.start_category:
                return True
            if self.params.fragment_first:
                return True
        return False


# ---------------------------------------------------------------------------
# Deterministic lockstep harness
# ---------------------------------------------------------------------------


@dataclass
class ScriptAction:
    """A consumer action fired at an exact transaction count."""

    at_tx: int
    action: str  # "poll" | "abort" | "reset"
    payload: object = None


@dataclass
class Observation:
    at_tx: int
    action: str
    snapshot: ParseSnapshot | None  # None = slot still void


class ScriptedContext:
    """Drop-in producer context that runs the consumer script in lockstep.

    There are no threads: actions fire exactly when the producer's
    transaction counter reaches their trigger, so whole runs (including the
    consumer's view) are deterministic and reports can be compared
    byte-for-byte.
    """

    def __init__(self, actions: list[ScriptAction] | None = None):
        self.actions = sorted(actions or [], key=lambda a: a.at_tx)
        self._cursor = 0
        self.transactions = 0
        self.versions = 0
        self.last_result: ParseSnapshot | None = None
        self.observations: list[Observation] = []
        self._directive = None

    def set_result(self, payload) -> int:
        self.versions += 1
        self.last_result = payload
        return self.versions

    def note_transaction(self) -> int:
        self.transactions += 1
        return self.transactions

    def check_status(self):
        while self._cursor < len(self.actions) and (
            self.actions[self._cursor].at_tx <= self.transactions
        ):
            action = self.actions[self._cursor]
            self._cursor += 1
            if action.action == "poll":
                self.observations.append(
                    Observation(self.transactions, "poll", self.last_result)
                )
            elif action.action == "abort":
                self.observations.append(
                    Observation(self.transactions, "abort", self.last_result)
                )
                self._directive = STOP_NOW
                return STOP_NOW
            elif action.action == "reset":
                self.observations.append(
                    Observation(self.transactions, "reset", self.last_result)
                )
                self._directive = ResetWith(action.payload)
                return self._directive
        return CONTINUE


@dataclass
class LockstepResult:
    producer: ParseProducer
    ctx: ScriptedContext

    @property
    def final_snapshot(self) -> ParseSnapshot | None:
        return self.ctx.last_result

    @property
    def published(self) -> list[ParseSnapshot]:
        return self.producer.published

    @property
    def log(self) -> list[TransactionRecord]:
        return self.producer.log


def run_lockstep(
    grammar: Grammar,
    params: StrategyParams,
    lattice,
    script: list[ScriptAction] | None = None,
    name: str = "lockstep",
) -> LockstepResult:
    """Run the producer to quiescence (or scripted stop) without threads.

    Resets in the script restart the producer with their payload lattice,
    mirroring what the threaded runtime wrapper does.
    """
    producer = ParseProducer(grammar, params, name=name)
    ctx = ScriptedContext(script)
    pending_input = lattice
    while True:
        producer.run(ctx, pending_input)
        directive = ctx._directive
        ctx._directive = None
        if isinstance(directive, ResetWith):
            pending_input = directive.new_input
            continue
        return LockstepResult(producer, ctx)


def run_batch(grammar: Grammar, params: StrategyParams, lattice) -> ParseSnapshot:
    """Parse to quiescence with no mid-run publications; the final forest."""
    quiet = StrategyParams(
        start_category=params.start_category,
        fragment_first=params.fragment_first,
        publish_every=10**9,
        beam=params.beam,
    )
    result = run_lockstep(grammar, quiet, lattice, name="batch")
    snapshot = result.final_snapshot
    assert snapshot is not None
    return snapshot
