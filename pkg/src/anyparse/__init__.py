"""Interruptible chart parsing over scored word lattices.

The package stacks four layers:

* :mod:`anyparse.featstruct` -- feature structures (acyclic attribute
  graphs with coreferences), non-destructive unification, subsumption.
* :mod:`anyparse.chart` -- an incremental active chart parser whose unit
  of work is one bounded transaction (one agenda task).
* :mod:`anyparse.runtime` -- a producer/consumer runtime: producers
  publish into a protected result slot that consumers may read at any
  moment, and honor aborts/resets at transaction boundaries.
* :mod:`anyparse.anytime` -- the parsing producer: snapshots of the best
  partial analyses, breadth/depth accounting, and result-production
  granularity measurement.

:mod:`anyparse.cli` wraps it all for humans (``anyparse parse|replay|check``).
"""

from .featstruct import (
    CyclicStructureError,
    Disjunction,
    FeatureStructure,
    FeatureStructureError,
    NotationError,
    UnificationFailure,
    subsumes,
    unify,
    unify_one_disjunct,
)
from .grammar import (
    Grammar,
    GrammarError,
    GrammarRule,
    Lattice,
    LexEntry,
    WordHypothesis,
    load_all,
    load_grammar,
    load_lattice,
    load_lexicon,
)
from .chart import (
    Agenda,
    Chart,
    Edge,
    ParserState,
    TransactionOutcome,
    category_check,
    combine_scores,
)
from .runtime import (
    CONTINUE,
    STOP_NOW,
    VOID,
    ProcessHandle,
    ProducerContext,
    ProtocolError,
    ResetWith,
    ResultSlot,
    SnapshotEnvelope,
    StartError,
    Status,
    abort_process,
    get_result,
    ping,
    reset_process,
    send_message,
    start_process,
)
from .anytime import (
    Analysis,
    GranularityReport,
    PacedStream,
    ParseProducer,
    ParseSnapshot,
    ScriptAction,
    ScriptedContext,
    StrategyParams,
    TransactionRecord,
    assemble_snapshot,
    depth_breadth_delta,
    measure_granularity,
    render_forest,
    run_batch,
    run_lockstep,
)

__version__ = "0.1.0"
