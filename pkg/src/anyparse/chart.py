"""Incremental active chart parsing over scored word lattices.

The parser is organized so that *every unit of work is one bounded
transaction*: a single agenda task.  A task is one of

* ``scan``     -- turn one word hypothesis into lexical edges,
* ``combine``  -- one application of the fundamental rule (an adjacent
  active/passive edge pair, including all the feature-structure
  unifications of the consumed step, for one choice of disjuncts),
* ``predict``  -- bottom-up introduction of one empty active edge,
* ``finalize`` -- apply one edge's deferred end-of-utterance equations.

:meth:`ParserState.step` pops exactly one task, runs it to completion and
reports what happened.  Between two ``step`` calls the chart is always in a
consistent state -- no edge ever holds a half-built feature structure -- so
a snapshot may be taken at any task boundary.  Cheap category checks gate
every unification, and the chart is append-only: edges are never retracted
or modified once inserted.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field, replace

from .featstruct import (
    FeatureStructure,
    Node,
    UnificationFailure,
    unify,
    unify_one_disjunct,
)
from .grammar import (
    MOTHER_FEATURE,
    Equation,
    Grammar,
    GrammarRule,
    LexEntry,
    WordHypothesis,
)

logger = logging.getLogger(__name__)

#: Workspace of a freshly predicted edge: an empty mother structure only.
_EMPTY_WORKSPACE = FeatureStructure(Node(arcs={MOTHER_FEATURE: Node()}))


def combine_scores(a: float, b: float) -> float:
    """Score of a combined constituent: the product of the part scores.

    The product is commutative, associative, monotone, and keeps scores in
    [0, 1]; 1.0 is the neutral score of an empty active edge.
    """
    return a * b


@dataclass(frozen=True)
class Edge:
    """One chart edge.  Immutable once inserted.

    ``rhs`` is the rule's right-hand side (empty for lexical edges), so the
    edge is passive iff ``dot == len(rhs)``.  ``choices`` records, per
    consumed constituent, which disjunct combination was used -- it is part
    of the edge's derivational identity.  ``pending_final`` lists the
    origins of deferred equations anywhere in this edge's derivation.
    """

    id: int
    start: int
    end: int
    category: str
    rhs: tuple[str, ...]
    dot: int
    fs: FeatureStructure
    score: float
    children: tuple[int, ...]
    choices: tuple[int, ...]
    rule_id: int | None = None
    lex: tuple[str, int] | None = None  # (word, entry index)
    pending_final: tuple[str, ...] = ()
    refined_from: int | None = None

    @property
    def is_passive(self) -> bool:
        return self.dot == len(self.rhs)

    @property
    def next_category(self) -> str | None:
        return self.rhs[self.dot] if self.dot < len(self.rhs) else None

    def label(self) -> str:
        if self.lex is not None:
            return f"{self.category}({self.lex[0]})"
        marker = list(self.rhs)
        marker.insert(self.dot, "•")
        return f"{self.category} -> {' '.join(marker)}"

    def __repr__(self) -> str:
        return f"<Edge {self.id} {self.label()} {self.start}-{self.end} {self.score:.3g}>"


def category_check(active: Edge, passive: Edge) -> bool:
    """Cheap gate before unification: adjacency plus category equality."""
    return (
        not active.is_passive
        and passive.is_passive
        and active.end == passive.start
        and active.next_category == passive.category
    )


# -- agenda tasks ------------------------------------------------------------


@dataclass(frozen=True)
class ScanTask:
    kind = "scan"
    hypothesis: WordHypothesis


@dataclass(frozen=True)
class CombineTask:
    kind = "combine"
    active_id: int
    passive_id: int
    choice: int


@dataclass(frozen=True)
class PredictTask:
    kind = "predict"
    passive_id: int
    rule_id: int


@dataclass(frozen=True)
class FinalizeTask:
    kind = "finalize"
    edge_id: int


Task = ScanTask | CombineTask | PredictTask | FinalizeTask


class Agenda:
    """Priority queue of tasks: higher priority first, FIFO on ties."""

    def __init__(self, beam: int | None = None):
        self._heap: list[tuple[float, int, Task]] = []
        self._seq = 0
        self.beam = beam

    def push(self, priority: float, task: Task) -> None:
        heapq.heappush(self._heap, (-priority, self._seq, task))
        self._seq += 1
        if self.beam is not None and len(self._heap) > self.beam:
            worst = max(self._heap)
            self._heap.remove(worst)
            heapq.heapify(self._heap)

    def pop(self) -> Task:
        return heapq.heappop(self._heap)[2]

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class TransactionOutcome:
    """What one ``step`` call did."""

    kind: str
    edges_added: tuple[int, ...] = ()
    failures: int = 0
    duration_ns: int = 0
    quiescent: bool = False
    detail: str = ""


@dataclass
class ChartStats:
    category_checks: int = 0
    combines_attempted: int = 0
    unification_failures: int = 0
    scans: int = 0
    predicts: int = 0
    finalizations: int = 0
    duplicates_suppressed: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(message)


class Chart:
    """Append-only edge store with the two lookups the fundamental rule needs."""

    def __init__(self) -> None:
        self.edges: list[Edge] = []
        self.active_by_end: dict[int, list[int]] = {}
        self.passive_by_start: dict[int, list[int]] = {}
        self._signatures: set[tuple] = set()

    def __len__(self) -> int:
        return len(self.edges)

    def get(self, edge_id: int) -> Edge:
        return self.edges[edge_id]

    def insert(self, signature: tuple, make_edge) -> Edge | None:
        """Insert unless the derivation signature was seen; returns the edge."""
        if signature in self._signatures:
            return None
        self._signatures.add(signature)
        edge = make_edge(len(self.edges))
        self.edges.append(edge)
        if edge.refined_from is None:
            if edge.is_passive:
                self.passive_by_start.setdefault(edge.start, []).append(edge.id)
            else:
                self.active_by_end.setdefault(edge.end, []).append(edge.id)
        return edge

    def passive_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.is_passive and e.refined_from is None]


class ParserState:
    """The producer-side parsing state.

    Confined to a single thread; everything handed outward (snapshots) must
    be rendered to immutable data first.  Hypotheses arrive through
    :meth:`feed`; :meth:`end_input` marks the end of the utterance, after
    which :meth:`finalize_utterance` schedules the deferred-equation tasks.
    """

    def __init__(self, grammar: Grammar, beam: int | None = None):
        self.grammar = grammar
        self.chart = Chart()
        self.agenda = Agenda(beam=beam)
        self.stats = ChartStats()
        self.transactions = 0
        self.input_consumed = 0
        self.input_ended = False
        self.finalization_scheduled = False
        self.min_start: int | None = None
        self.max_end: int | None = None
        self.refined: dict[int, int] = {}  # original edge id -> refined edge id
        self.final_inconsistent: set[int] = set()
        self._scanned_spans: set[tuple[str, int, int]] = set()
        self._predicted: set[tuple[int, int]] = set()
        self._finalized_fs_memo: dict[int, FeatureStructure | None] = {}

    # -- input -------------------------------------------------------------

    def feed(self, wh: WordHypothesis) -> None:
        if self.input_ended:
            raise RuntimeError("input already ended")
        self.agenda.push(wh.score, ScanTask(wh))

    def end_input(self) -> None:
        self.input_ended = True

    # -- high-level state --------------------------------------------------

    @property
    def agenda_empty(self) -> bool:
        return not self.agenda

    @property
    def quiescent(self) -> bool:
        return self.agenda_empty and self.input_ended and self.finalization_scheduled

    @property
    def finalized(self) -> bool:
        """True once no transaction (including finalization) remains to run."""
        if not (self.input_ended and self.agenda_empty):
            return False
        if self.finalization_scheduled:
            return True
        return not any(e.pending_final for e in self.chart.passive_edges())

    def lattice_span(self) -> tuple[int, int] | None:
        if self.min_start is None or self.max_end is None:
            return None
        return self.min_start, self.max_end

    # -- the transaction ----------------------------------------------------

    def step(self) -> TransactionOutcome:
        """Execute exactly one pending task; the sole unit of interruptibility."""
        if not self.agenda:
            return TransactionOutcome(kind="quiescent", quiescent=True)
        started = time.perf_counter_ns()
        task = self.agenda.pop()
        if isinstance(task, ScanTask):
            outcome = self._run_scan(task)
        elif isinstance(task, CombineTask):
            outcome = self._run_combine(task)
        elif isinstance(task, PredictTask):
            outcome = self._run_predict(task)
        else:
            outcome = self._run_finalize(task)
        outcome.duration_ns = time.perf_counter_ns() - started
        self.transactions += 1
        return outcome

    def run_to_quiescence(self, max_steps: int | None = None) -> int:
        """Drain the agenda (plus finalization); returns transactions run."""
        ran = 0
        while True:
            if self.agenda_empty:
                if self.input_ended and not self.finalization_scheduled:
                    self.finalize_utterance()
                    continue
                return ran
            self.step()
            ran += 1
            if max_steps is not None and ran >= max_steps:
                return ran

    # -- scan ---------------------------------------------------------------

    def _run_scan(self, task: ScanTask) -> TransactionOutcome:
        wh = task.hypothesis
        self.stats.scans += 1
        self.input_consumed += 1
        self.min_start = wh.start if self.min_start is None else min(self.min_start, wh.start)
        self.max_end = wh.end if self.max_end is None else max(self.max_end, wh.end)
        key = (wh.word, wh.start, wh.end)
        if key in self._scanned_spans:
            self.stats.duplicates_suppressed += 1
            return TransactionOutcome(kind="scan", detail=f"duplicate {wh.word}")
        self._scanned_spans.add(key)
        edges = self.scan(wh)
        return TransactionOutcome(kind="scan", edges_added=tuple(e.id for e in edges))

    def scan(self, wh: WordHypothesis) -> list[Edge]:
        """One passive lexical edge per lexicon entry for the hypothesis.

        Unknown words are recorded as warnings, never errors: competing
        hypotheses in the lattice must keep parsing alive.
        """
        entries = self.grammar.entries_for(wh.word)
        if not entries:
            self.stats.warn(f"unknown word {wh.word!r} at {wh.start}-{wh.end}; skipped")
            return []
        added: list[Edge] = []
        for entry in entries:
            edge = self._insert_lexical(wh, entry)
            if edge is not None:
                added.append(edge)
        return added

    def _insert_lexical(self, wh: WordHypothesis, entry: LexEntry) -> Edge | None:
        signature = ("lex", wh.word, entry.index, wh.start, wh.end)
        pending = tuple(e.origin for e in entry.final_equations)

        def make(edge_id: int) -> Edge:
            return Edge(
                id=edge_id,
                start=wh.start,
                end=wh.end,
                category=entry.category,
                rhs=(),
                dot=0,
                fs=entry.fs,
                score=wh.score,
                children=(),
                choices=(),
                lex=(wh.word, entry.index),
                pending_final=pending,
            )

        edge = self.chart.insert(signature, make)
        if edge is not None:
            self._after_passive(edge)
        return edge

    # -- predict ------------------------------------------------------------

    def _run_predict(self, task: PredictTask) -> TransactionOutcome:
        self.stats.predicts += 1
        passive = self.chart.get(task.passive_id)
        rule = self.grammar.rules[task.rule_id]
        edges = self._insert_empty_active(rule, passive.start)
        return TransactionOutcome(kind="predict", edges_added=tuple(e.id for e in edges))

    def predict(self, passive: Edge) -> list[Edge]:
        """Bottom-up rule invocation for a new passive edge (deduplicated)."""
        added: list[Edge] = []
        for rule in self.grammar.rules_starting_with(passive.category):
            added.extend(self._insert_empty_active(rule, passive.start))
        return added

    def _insert_empty_active(self, rule: GrammarRule, vertex: int) -> list[Edge]:
        signature = ("pred", rule.id, vertex)
        pending = tuple(e.origin for e in rule.final_equations)

        def make(edge_id: int) -> Edge:
            return Edge(
                id=edge_id,
                start=vertex,
                end=vertex,
                category=rule.lhs,
                rhs=rule.rhs,
                dot=0,
                fs=_EMPTY_WORKSPACE,
                score=1.0,
                children=(),
                choices=(),
                rule_id=rule.id,
                pending_final=pending,
            )

        edge = self.chart.insert(signature, make)
        if edge is None:
            return []
        self._after_active(edge)
        return [edge]

    # -- combine (the fundamental rule) --------------------------------------

    def _run_combine(self, task: CombineTask) -> TransactionOutcome:
        active = self.chart.get(task.active_id)
        passive = self.chart.get(task.passive_id)
        self.stats.category_checks += 1
        if not category_check(active, passive):
            raise AssertionError("combine task scheduled for incompatible edges")
        self.stats.combines_attempted += 1
        result = self.fundamental_rule(active, passive, task.choice)
        if isinstance(result, UnificationFailure):
            self.stats.unification_failures += 1
            return TransactionOutcome(kind="combine", failures=1, detail=result.reason)
        edge = self._insert_combined(result)
        if edge is None:
            self.stats.duplicates_suppressed += 1
            return TransactionOutcome(kind="combine")
        return TransactionOutcome(kind="combine", edges_added=(edge.id,))

    def fundamental_rule(
        self, active: Edge, passive: Edge, disjunct_choice: int | None = None
    ) -> Edge | UnificationFailure:
        """Combine an adjacent active/passive pair into a new edge.

        Evaluates the rule's equations for the consumed constituent under
        the given disjunct choice (a flat index into the cross product of
        the step's disjunctive equations; little-endian in grammar order).
        The call either yields a complete new edge or a failure -- nothing
        in between, so it is safe to snapshot around it.
        """
        assert category_check(active, passive)
        rule = self.grammar.rules[active.rule_id]  # type: ignore[index]
        step = active.dot + 1
        equations = rule.step_equations(step)
        picks = _decode_choice(disjunct_choice or 0, equations)
        workspace = self._graft(active.fs, step, passive.fs)
        if isinstance(workspace, UnificationFailure):
            return workspace
        for equation, pick in zip(equations, picks):
            result = unify_one_disjunct(workspace, equation.disjunction, pick)
            if isinstance(result, UnificationFailure):
                return result
            workspace = result
        return Edge(
            id=-1,  # assigned at insertion
            start=active.start,
            end=passive.end,
            category=active.category,
            rhs=active.rhs,
            dot=step,
            fs=workspace,
            score=combine_scores(active.score, passive.score),
            children=active.children + (passive.id,),
            choices=active.choices + (disjunct_choice or 0,),
            rule_id=active.rule_id,
            pending_final=active.pending_final + passive.pending_final,
        )

    def _graft(
        self, workspace: FeatureStructure, step: int, constituent_ws: FeatureStructure
    ) -> FeatureStructure | UnificationFailure:
        """Bind a consumed constituent's structure under top feature ``step``."""
        mother = constituent_ws.root.arcs.get(MOTHER_FEATURE)
        if mother is None:
            mother = Node()
        wrapper = FeatureStructure(Node(arcs={str(step): mother}))
        return unify(workspace, wrapper)

    def _insert_combined(self, built: Edge) -> Edge | None:
        signature = (
            "comb",
            built.rule_id,
            built.dot,
            built.start,
            built.end,
            built.children,
            built.choices,
        )

        edge = self.chart.insert(signature, lambda edge_id: replace(built, id=edge_id))
        if edge is None:
            return None
        if edge.is_passive:
            self._after_passive(edge)
        else:
            self._after_active(edge)
        return edge

    # -- finalization ---------------------------------------------------------

    def finalize_utterance(self) -> list[Edge]:
        """Schedule one finalize task per passive edge with deferred work.

        Each scheduled task is its own transaction.  Pre-finalization
        snapshots stay valid as partial analyses; refined edges are added
        beside their originals, never in place of them.
        """
        if not self.input_ended:
            raise RuntimeError("cannot finalize before the input stream has ended")
        if self.finalization_scheduled:
            return []
        self.finalization_scheduled = True
        scheduled: list[Edge] = []
        for edge in self.chart.passive_edges():
            if edge.pending_final:
                self.agenda.push(edge.score, FinalizeTask(edge.id))
                scheduled.append(edge)
        return scheduled

    def _run_finalize(self, task: FinalizeTask) -> TransactionOutcome:
        self.stats.finalizations += 1
        edge = self.chart.get(task.edge_id)
        refined_fs = self._finalized_fs(edge.id)
        if refined_fs is None:
            self.final_inconsistent.add(edge.id)
            self.stats.unification_failures += 1
            return TransactionOutcome(kind="finalize", failures=1, detail=f"edge {edge.id}")
        signature = ("ref", edge.id)

        def make(edge_id: int) -> Edge:
            return replace(
                edge, id=edge_id, fs=refined_fs, pending_final=(), refined_from=edge.id
            )

        refined = self.chart.insert(signature, make)
        if refined is None:
            return TransactionOutcome(kind="finalize")
        self.refined[edge.id] = refined.id
        return TransactionOutcome(kind="finalize", edges_added=(refined.id,))

    def _finalized_fs(self, edge_id: int) -> FeatureStructure | None:
        """The edge's structure with all deferred equations applied.

        Computed by replaying the edge's derivation bottom-up with the
        deferred equations included.  Unification is order-independent, so
        the replay agrees with having applied everything eagerly; a clash
        anywhere makes the whole analysis finally inconsistent (None).
        """
        if edge_id in self._finalized_fs_memo:
            return self._finalized_fs_memo[edge_id]
        edge = self.chart.get(edge_id)
        result: FeatureStructure | None
        if not edge.pending_final:
            result = edge.fs
        elif edge.lex is not None:
            word, index = edge.lex
            entry = self.grammar.entries_for(word)[index]
            current: FeatureStructure | None = entry.fs
            for equation in entry.final_equations:
                step_result = unify_one_disjunct(current, equation.disjunction, 0)
                if isinstance(step_result, UnificationFailure):
                    current = None
                    break
                current = step_result
            result = current
        else:
            rule = self.grammar.rules[edge.rule_id]  # type: ignore[index]
            result = self._replay_with_finals(edge, rule)
        self._finalized_fs_memo[edge_id] = result
        return result

    def _replay_with_finals(self, edge: Edge, rule: GrammarRule) -> FeatureStructure | None:
        workspace: FeatureStructure | UnificationFailure = _EMPTY_WORKSPACE
        for step, (child_id, choice) in enumerate(zip(edge.children, edge.choices), start=1):
            child_fs = self._finalized_fs(child_id)
            if child_fs is None:
                return None
            workspace = self._graft(workspace, step, child_fs)
            if isinstance(workspace, UnificationFailure):
                return None
            equations = rule.step_equations(step)
            picks = _decode_choice(choice, equations)
            for equation, pick in zip(equations, picks):
                workspace = unify_one_disjunct(workspace, equation.disjunction, pick)
                if isinstance(workspace, UnificationFailure):
                    return None
        for equation in rule.final_equations:
            if equation.step <= edge.dot:
                workspace = unify_one_disjunct(workspace, equation.disjunction, 0)
                if isinstance(workspace, UnificationFailure):
                    return None
        return workspace

    # -- follow-up scheduling --------------------------------------------------

    def _after_passive(self, edge: Edge) -> None:
        for rule in self.grammar.rules_starting_with(edge.category):
            key = (rule.id, edge.start)
            if key not in self._predicted:
                self._predicted.add(key)
                self.agenda.push(edge.score, PredictTask(edge.id, rule.id))
        for active_id in self.chart.active_by_end.get(edge.start, ()):
            active = self.chart.get(active_id)
            self.stats.category_checks += 1
            if category_check(active, edge):
                self._schedule_combines(active, edge)

    def _after_active(self, edge: Edge) -> None:
        for passive_id in self.chart.passive_by_start.get(edge.end, ()):
            passive = self.chart.get(passive_id)
            self.stats.category_checks += 1
            if category_check(edge, passive):
                self._schedule_combines(edge, passive)

    def _schedule_combines(self, active: Edge, passive: Edge) -> None:
        rule = self.grammar.rules[active.rule_id]  # type: ignore[index]
        equations = rule.step_equations(active.dot + 1)
        total = 1
        for equation in equations:
            total *= len(equation.disjunction)
        priority = combine_scores(active.score, passive.score)
        for flat in range(total):
            self.agenda.push(priority, CombineTask(active.id, passive.id, flat))


def _decode_choice(flat: int, equations: tuple[Equation, ...]) -> list[int]:
    """Little-endian mixed-radix decode of a flat disjunct choice."""
    picks: list[int] = []
    for equation in equations:
        radix = len(equation.disjunction)
        picks.append(flat % radix)
        flat //= radix
    return picks
