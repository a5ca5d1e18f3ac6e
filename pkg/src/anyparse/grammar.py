"""Grammar, lexicon and lattice file handling.

File formats (line oriented, ``#`` starts a comment)
=====================================================

Grammar file -- one ``Rule`` header per rule, equations on the following
lines::

    Rule S -> NP VP
        <0 agr> = <1 agr>
        <1 agr> = <2 agr>
        <0 mood> = decl !final

Constituent 0 is the rule's left-hand side, 1..n its right-hand side
positions.  An equation either identifies two paths (``<0 agr> = <2 agr>``)
or assigns a value to one path.  Values are atoms or bracketed structures
in the notation of :mod:`anyparse.featstruct`, and may offer alternatives
separated by ``|``; each alternative is explored as its own unit of work.
A trailing ``!final`` defers the equation until the end of the utterance.

Lexicon file -- ``Lex`` entries, same equation syntax, constituent 0 only::

    Lex dog N
        <0 agr num> = sg

Lattice file -- one scored word hypothesis per line, tab separated::

    word <TAB> start-vertex <TAB> end-vertex <TAB> score

Internally every edge's feature structure uses a fixed layout: the
structure of the rule's left-hand side sits under the top feature
``head-fs`` and the structure of right-hand constituent *i* under the top
feature ``i``.  Equations are compiled against that layout once, at load
time, each one becoming a (possibly one-element) disjunction of structures
to unify into the workspace.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path as FilePath

from .featstruct import (
    Disjunction,
    FeatureStructure,
    FeatureStructureError,
    NotationError,
    Path,
    coref_fs,
    fs_at_path,
    unify,
)

MOTHER_FEATURE = "head-fs"

_NAME = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_'\-]*$")


class GrammarError(Exception):
    """A file could not be loaded; carries file/line positions."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<input>'}:{line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    line: int
    message: str

    def format(self, source: str = "<input>") -> str:
        return f"{source}:{self.line}: {self.level}: {self.message}"


@dataclass(frozen=True)
class PathRef:
    """A constituent-indexed path, as written ``<2 head agr>``."""

    index: int
    path: Path

    def layout_path(self) -> Path:
        head = MOTHER_FEATURE if self.index == 0 else str(self.index)
        return (head,) + self.path

    def __str__(self) -> str:
        return "<" + " ".join((str(self.index),) + self.path) + ">"


@dataclass(frozen=True)
class Equation:
    """One compiled grammar equation.

    ``disjunction`` holds workspace-shaped structures: unifying one chosen
    alternative into an edge's workspace applies the equation.  ``step`` is
    the right-hand constituent position whose consumption triggers the
    equation (equations mentioning only the mother run at step 1).
    """

    origin: str
    source: str
    final_only: bool
    step: int
    disjunction: Disjunction


@dataclass(frozen=True)
class GrammarRule:
    id: int
    lhs: str
    rhs: tuple[str, ...]
    equations: tuple[Equation, ...]
    line: int

    @property
    def name(self) -> str:
        return f"{self.lhs} -> {' '.join(self.rhs)}"

    def step_equations(self, step: int) -> tuple[Equation, ...]:
        """Non-deferred equations evaluated when constituent ``step`` is consumed."""
        return tuple(e for e in self.equations if not e.final_only and e.step == step)

    @property
    def final_equations(self) -> tuple[Equation, ...]:
        return tuple(e for e in self.equations if e.final_only)


@dataclass(frozen=True)
class LexEntry:
    word: str
    category: str
    fs: FeatureStructure  # workspace-shaped: [head-fs: ...]
    final_equations: tuple[Equation, ...]
    index: int  # position among the word's entries
    line: int

    @property
    def name(self) -> str:
        return f"{self.word}/{self.category}[{self.index}]"


@dataclass(frozen=True)
class WordHypothesis:
    """A scored word over a time segment of the input lattice."""

    word: str
    start: int
    end: int
    score: float

    def __post_init__(self) -> None:
        if self.start < 0 or self.start >= self.end:
            raise ValueError(f"bad hypothesis span {self.start}..{self.end}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"hypothesis score {self.score} outside [0, 1]")


@dataclass
class Lattice:
    """An ordered stream of word hypotheses; arrival order is input order."""

    hypotheses: list[WordHypothesis] = field(default_factory=list)

    def append(self, wh: WordHypothesis) -> None:
        self.hypotheses.append(wh)

    @property
    def vertex_count(self) -> int:
        return max((wh.end for wh in self.hypotheses), default=0) + 1

    def __iter__(self):
        return iter(self.hypotheses)

    def __len__(self) -> int:
        return len(self.hypotheses)


class Grammar:
    """Compiled rules plus a word -> entries lexicon."""

    def __init__(self, rules: list[GrammarRule], entries: list[LexEntry]):
        self.rules: tuple[GrammarRule, ...] = tuple(rules)
        self.lexicon: dict[str, tuple[LexEntry, ...]] = {}
        by_word: dict[str, list[LexEntry]] = {}
        for entry in entries:
            by_word.setdefault(entry.word, []).append(entry)
        self.lexicon = {w: tuple(es) for w, es in by_word.items()}
        self._by_first: dict[str, tuple[GrammarRule, ...]] = {}
        first: dict[str, list[GrammarRule]] = {}
        for rule in self.rules:
            first.setdefault(rule.rhs[0], []).append(rule)
        self._by_first = {cat: tuple(rs) for cat, rs in first.items()}

    def rules_starting_with(self, category: str) -> tuple[GrammarRule, ...]:
        return self._by_first.get(category, ())

    def entries_for(self, word: str) -> tuple[LexEntry, ...]:
        return self.lexicon.get(word, ())

    @property
    def categories(self) -> set[str]:
        cats = {r.lhs for r in self.rules}
        for r in self.rules:
            cats.update(r.rhs)
        for entries in self.lexicon.values():
            cats.update(e.category for e in entries)
        return cats


# ---------------------------------------------------------------------------
# Equation parsing and compilation
# ---------------------------------------------------------------------------


def _parse_path_ref(text: str, line: int, source: str) -> PathRef:
    body = text.strip()
    if not (body.startswith("<") and body.endswith(">")):
        raise GrammarError(f"malformed path {text!r}", line, source)
    parts = body[1:-1].split()
    if not parts or not parts[0].isdigit():
        raise GrammarError(f"path must start with a constituent index: {text!r}", line, source)
    for name in parts[1:]:
        if not _NAME.match(name):
            raise GrammarError(f"bad feature name {name!r}", line, source)
    return PathRef(int(parts[0]), tuple(parts[1:]))


def _split_alternatives(text: str) -> list[str]:
    """Split on top-level ``|`` (not inside brackets)."""
    parts: list[str] = []
    depth = 0
    current: list[str] = []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "|" and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p.strip() for p in parts]


def _compile_equation(
    text: str, line: int, source: str, origin: str, max_constituent: int
) -> Equation:
    final_only = False
    body = text.strip()
    if body.endswith("!final"):
        final_only = True
        body = body[: -len("!final")].strip()
    if "=" not in body:
        raise GrammarError(f"equation needs '=': {text!r}", line, source)
    lhs_text, rhs_text = body.split("=", 1)
    lhs = _parse_path_ref(lhs_text, line, source)
    if lhs.index > max_constituent:
        raise GrammarError(
            f"constituent index {lhs.index} out of range (rule has {max_constituent})",
            line,
            source,
        )
    rhs_text = rhs_text.strip()
    indices = [lhs.index]
    if rhs_text.startswith("<"):
        rhs = _parse_path_ref(rhs_text, line, source)
        if rhs.index > max_constituent:
            raise GrammarError(
                f"constituent index {rhs.index} out of range (rule has {max_constituent})",
                line,
                source,
            )
        indices.append(rhs.index)
        alternatives = (coref_fs(lhs.layout_path(), rhs.layout_path()),)
    else:
        literals = _split_alternatives(rhs_text)
        alts = []
        for literal in literals:
            if not literal:
                raise GrammarError(f"empty alternative in {text!r}", line, source)
            try:
                value = (
                    FeatureStructure.from_text(literal)
                    if literal.startswith(("[", "#"))
                    else FeatureStructure.atom(literal)
                )
            except NotationError as exc:
                raise GrammarError(f"bad value {literal!r}: {exc}", line, source) from exc
            except FeatureStructureError as exc:
                raise GrammarError(f"bad value {literal!r}: {exc}", line, source) from exc
            alts.append(fs_at_path(lhs.layout_path(), value))
        alternatives = tuple(alts)
    if final_only and len(alternatives) > 1:
        raise GrammarError("a '!final' equation cannot offer alternatives", line, source)
    return Equation(
        origin=origin,
        source=body,
        final_only=final_only,
        step=max(1, max(indices)),
        disjunction=Disjunction(alternatives, origin=origin),
    )


def _expand_lex_structures(
    equations: list[Equation], line: int, source: str, word: str
) -> list[FeatureStructure]:
    """Cross product of a lexical entry's (possibly disjunctive) equations."""
    base = fs_at_path((MOTHER_FEATURE,), FeatureStructure.empty())
    variants = [base]
    for eq in equations:
        grown: list[FeatureStructure] = []
        for variant in variants:
            for alt in eq.disjunction.alternatives:
                result = unify(variant, alt)
                if result:
                    grown.append(result)
        if not grown:
            raise GrammarError(
                f"lexical entry for {word!r} is internally inconsistent ({eq.source})",
                line,
                source,
            )
        variants = grown
    return variants


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _iter_blocks(text: str, source: str):
    """Yield (kind, header_parts, [(line_no, equation_text)], line_no)."""
    header: tuple[str, list[str], int] | None = None
    body: list[tuple[int, str]] = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("<"):
            if header is None:
                raise GrammarError("equation outside any Rule/Lex block", line_no, source)
            body.append((line_no, stripped))
            continue
        if header is not None:
            yield header[0], header[1], body, header[2]
        parts = stripped.split()
        if parts[0] not in ("Rule", "Lex"):
            raise GrammarError(f"expected 'Rule' or 'Lex', found {parts[0]!r}", line_no, source)
        header = (parts[0], parts[1:], line_no)
        body = []
    if header is not None:
        yield header[0], header[1], body, header[2]


def parse_grammar_file(text: str, source: str = "<grammar>") -> list[GrammarRule]:
    rules: list[GrammarRule] = []
    for kind, parts, body, line_no in _iter_blocks(text, source):
        if kind != "Rule":
            raise GrammarError("lexical entries belong in the lexicon file", line_no, source)
        if len(parts) < 3 or parts[1] != "->":
            raise GrammarError("expected 'Rule LHS -> RHS...'", line_no, source)
        lhs, rhs = parts[0], tuple(parts[2:])
        for sym in (lhs,) + rhs:
            if not _NAME.match(sym):
                raise GrammarError(f"bad category name {sym!r}", line_no, source)
        origin = f"{lhs}->{'.'.join(rhs)}@{line_no}"
        equations = tuple(
            _compile_equation(eq_text, eq_line, source, f"{origin}/{eq_line}", len(rhs))
            for eq_line, eq_text in body
        )
        rules.append(GrammarRule(len(rules), lhs, rhs, equations, line_no))
    return rules


def parse_lexicon_file(text: str, source: str = "<lexicon>") -> list[LexEntry]:
    entries: list[LexEntry] = []
    per_word: dict[str, int] = {}
    for kind, parts, body, line_no in _iter_blocks(text, source):
        if kind != "Lex":
            raise GrammarError("grammar rules belong in the grammar file", line_no, source)
        if len(parts) != 2:
            raise GrammarError("expected 'Lex word CATEGORY'", line_no, source)
        word, category = parts
        if not _NAME.match(category):
            raise GrammarError(f"bad category name {category!r}", line_no, source)
        origin = f"{word}/{category}@{line_no}"
        equations = [
            _compile_equation(eq_text, eq_line, source, f"{origin}/{eq_line}", 0)
            for eq_line, eq_text in body
        ]
        finals = tuple(e for e in equations if e.final_only)
        plain = [e for e in equations if not e.final_only]
        for fs in _expand_lex_structures(plain, line_no, source, word):
            index = per_word.get(word, 0)
            per_word[word] = index + 1
            entries.append(LexEntry(word, category, fs, finals, index, line_no))
    return entries


def parse_lattice_file(text: str, source: str = "<lattice>") -> Lattice:
    lattice = Lattice()
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise GrammarError(
                f"expected 'word<TAB>start<TAB>end<TAB>score', found {line.strip()!r}",
                line_no,
                source,
            )
        word, start_s, end_s, score_s = (f.strip() for f in fields)
        try:
            start, end, score = int(start_s), int(end_s), float(score_s)
        except ValueError as exc:
            raise GrammarError(f"bad number in lattice line: {exc}", line_no, source) from exc
        if not math.isfinite(score):
            raise GrammarError("lattice score must be finite", line_no, source)
        try:
            lattice.append(WordHypothesis(word, start, end, score))
        except ValueError as exc:
            raise GrammarError(str(exc), line_no, source) from exc
    return lattice


def load_grammar(path: str | FilePath) -> list[GrammarRule]:
    path = FilePath(path)
    return parse_grammar_file(path.read_text(encoding="utf-8"), str(path))


def load_lexicon(path: str | FilePath) -> list[LexEntry]:
    path = FilePath(path)
    return parse_lexicon_file(path.read_text(encoding="utf-8"), str(path))


def load_lattice(path: str | FilePath) -> Lattice:
    path = FilePath(path)
    return parse_lattice_file(path.read_text(encoding="utf-8"), str(path))


def load_all(grammar_path, lexicon_path) -> Grammar:
    return Grammar(load_grammar(grammar_path), load_lexicon(lexicon_path))


# ---------------------------------------------------------------------------
# Static validation (the `check` subcommand)
# ---------------------------------------------------------------------------


def validate_grammar(rules: list[GrammarRule], entries: list[LexEntry]) -> list[Diagnostic]:
    """Static sanity checks; errors make the grammar unusable, warnings don't."""
    diagnostics: list[Diagnostic] = []
    grammar = Grammar(rules, entries)
    producible = {r.lhs for r in rules} | {e.category for e in entries}
    for rule in rules:
        for sym in rule.rhs:
            if sym not in producible:
                diagnostics.append(
                    Diagnostic(
                        "warning",
                        rule.line,
                        f"category {sym!r} has no rules and no lexical entries",
                    )
                )
    seen_signatures: dict[tuple, int] = {}
    for rule in rules:
        signature = (rule.lhs, rule.rhs)
        if signature in seen_signatures:
            diagnostics.append(
                Diagnostic(
                    "warning",
                    rule.line,
                    f"duplicate rule {rule.name!r} (first at line {seen_signatures[signature]})",
                )
            )
        else:
            seen_signatures[signature] = rule.line
    # Unary-rule cycles make the parsing closure unbounded; warn loudly.
    unary: dict[str, set[str]] = {}
    for rule in rules:
        if len(rule.rhs) == 1:
            unary.setdefault(rule.lhs, set()).add(rule.rhs[0])
    for start in unary:
        stack, seen = [start], set()
        while stack:
            cat = stack.pop()
            for nxt in unary.get(cat, ()):
                if nxt == start:
                    diagnostics.append(
                        Diagnostic(
                            "warning",
                            0,
                            f"unary rule cycle through {start!r}; parsing may not terminate",
                        )
                    )
                    stack = []
                    break
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    del grammar
    # De-duplicate unary-cycle warnings (each cycle reports once per member).
    unique: list[Diagnostic] = []
    seen_msgs: set[tuple] = set()
    for diag in diagnostics:
        key = (diag.level, diag.message)
        if key not in seen_msgs:
            seen_msgs.add(key)
            unique.append(diag)
    return unique


def collect_load_diagnostics(
    grammar_text: str,
    lexicon_text: str,
    grammar_source: str = "<grammar>",
    lexicon_source: str = "<lexicon>",
) -> tuple[list[GrammarRule], list[LexEntry], list[Diagnostic]]:
    """Load both files, turning hard load errors into diagnostics."""
    diagnostics: list[Diagnostic] = []
    rules: list[GrammarRule] = []
    entries: list[LexEntry] = []
    try:
        rules = parse_grammar_file(grammar_text, grammar_source)
    except GrammarError as exc:
        diagnostics.append(Diagnostic("error", exc.line or 0, str(exc)))
    try:
        entries = parse_lexicon_file(lexicon_text, lexicon_source)
    except GrammarError as exc:
        diagnostics.append(Diagnostic("error", exc.line or 0, str(exc)))
    if not any(d.level == "error" for d in diagnostics):
        diagnostics.extend(validate_grammar(rules, entries))
    return rules, entries, diagnostics


__all__ = [
    "Diagnostic",
    "Equation",
    "Grammar",
    "GrammarError",
    "GrammarRule",
    "Lattice",
    "LexEntry",
    "MOTHER_FEATURE",
    "PathRef",
    "WordHypothesis",
    "collect_load_diagnostics",
    "load_all",
    "load_grammar",
    "load_lattice",
    "load_lexicon",
    "parse_grammar_file",
    "parse_lattice_file",
    "parse_lexicon_file",
    "validate_grammar",
]
