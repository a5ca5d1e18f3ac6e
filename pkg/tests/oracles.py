"""Independent reference implementations the tests check the package against.

Nothing here shares code paths with the implementations under test beyond
the unification operation itself (whose own laws are established against
the fact-closure oracle below before anything else relies on it).
"""

from __future__ import annotations

import itertools
from collections import Counter

from anyparse.featstruct import (
    CyclicStructureError,
    FeatureStructure,
    Node,
    UnificationFailure,
    fs_at_path,
    unify,
    unify_one_disjunct,
)
from anyparse.grammar import MOTHER_FEATURE, Grammar, Lattice


# ---------------------------------------------------------------------------
# Fact extraction: a feature structure as a set of primitive claims
# ---------------------------------------------------------------------------


class Facts:
    """paths, atoms-at-paths, and path-equality classes of one structure.

    Equal atoms count as the same individual (sharing an atom node is not
    information beyond the atoms being equal), so equality classes are
    computed after interning atoms by value.
    """

    def __init__(self, paths, atoms, classes):
        self.paths: set[tuple] = paths
        self.atoms: dict[tuple, str] = atoms
        self.classes: dict[tuple, frozenset] = classes  # path -> its class

    def entails(self, other: "Facts") -> bool:
        """True iff every claim in ``other`` also holds here (other <= self)."""
        if not other.paths <= self.paths:
            return False
        for path, atom in other.atoms.items():
            if self.atoms.get(path) != atom:
                return False
        for path in other.paths:
            for mate in other.classes[path]:
                if mate not in self.classes[path]:
                    return False
        return True

    def same_as(self, other: "Facts") -> bool:
        return self.entails(other) and other.entails(self)


def extract_facts(fs: FeatureStructure) -> Facts:
    paths: set[tuple] = set()
    atoms: dict[tuple, str] = {}
    by_node: dict[object, set[tuple]] = {}
    stack = [((), fs.root)]
    while stack:
        path, node = stack.pop()
        paths.add(path)
        if node.is_atom:
            atoms[path] = node.atom
            by_node.setdefault(("atom", node.atom), set()).add(path)
            continue
        by_node.setdefault(id(node), set()).add(path)
        for feature, child in node.arcs.items():
            stack.append((path + (feature,), child))
    classes: dict[tuple, frozenset] = {}
    for group in by_node.values():
        frozen = frozenset(group)
        for path in group:
            classes[path] = frozen
    return Facts(paths, atoms, classes)


# ---------------------------------------------------------------------------
# Tree-expansion unification oracle
# ---------------------------------------------------------------------------


class OracleClash(Exception):
    pass


class OracleCycle(Exception):
    pass


def oracle_unify_facts(a: FeatureStructure, b: FeatureStructure) -> Facts:
    """Fixpoint closure of the combined claims of ``a`` and ``b``.

    Expands both graphs to their path sets with explicit equality
    constraints and closes under congruence (equal paths have equal
    extensions) and atom propagation.  Raises :class:`OracleClash` on
    contradiction and :class:`OracleCycle` when the closure keeps growing
    past any depth the merged graphs could justify (the acyclic
    implementation must reject those inputs too).
    """
    fa, fb = extract_facts(a), extract_facts(b)
    max_len = len(a.nodes()) + len(b.nodes()) + 2

    paths = set(fa.paths) | set(fb.paths)
    atoms: dict[tuple, str] = {}
    parent: dict[tuple, tuple] = {}

    def find(path):
        while parent.get(path, path) != path:
            parent[path] = parent.get(parent[path], parent[path])
            path = parent[path]
        return path

    def union(p, q):
        rp, rq = find(p), find(q)
        if rp != rq:
            parent[rq] = rp

    for facts in (fa, fb):
        for path, atom in facts.atoms.items():
            if atoms.setdefault(path, atom) != atom:
                raise OracleClash(f"atom clash at {path}")
        for path in facts.paths:
            parent.setdefault(path, path)
            for mate in facts.classes[path]:
                parent.setdefault(mate, mate)
                union(path, mate)

    changed = True
    while changed:
        changed = False
        groups: dict[tuple, list[tuple]] = {}
        for path in list(paths):
            groups.setdefault(find(path), []).append(path)
        for members in groups.values():
            # atom agreement and propagation across the class
            values = {atoms[p] for p in members if p in atoms}
            if len(values) > 1:
                raise OracleClash(f"atom clash among {members}")
            if values:
                value = values.pop()
                for p in members:
                    if atoms.setdefault(p, value) != value:
                        raise OracleClash("atom clash")
            # congruence: extensions present on one member exist on all
            features = set()
            for p in members:
                for q in paths:
                    if len(q) == len(p) + 1 and q[: len(p)] == p:
                        features.add(q[-1])
            if features and any(p in atoms for p in members):
                raise OracleClash("atom vs complex")
            for feature in features:
                exts = [p + (feature,) for p in members]
                for ext in exts:
                    if len(ext) > max_len:
                        raise OracleCycle("closure grew past any acyclic depth")
                    if ext not in paths:
                        paths.add(ext)
                        parent.setdefault(ext, ext)
                        changed = True
                first = exts[0]
                for ext in exts[1:]:
                    if find(ext) != find(first):
                        union(first, ext)
                        changed = True

    classes: dict[tuple, frozenset] = {}
    groups = {}
    for path in paths:
        groups.setdefault(find(path), set()).add(path)
    for group in groups.values():
        frozen = frozenset(group)
        for path in group:
            classes[path] = frozen
    # atoms must cover whole classes by now
    full_atoms: dict[tuple, str] = {}
    for path in paths:
        for mate in classes[path]:
            if mate in atoms:
                full_atoms[path] = atoms[mate]
                break
    return Facts(paths, full_atoms, classes)


def oracle_subsumes(a: FeatureStructure, b: FeatureStructure) -> bool:
    """Claim containment, checked by enumerating all path pairs."""
    return extract_facts(b).entails(extract_facts(a))


# ---------------------------------------------------------------------------
# Brute-force derivation counting (context-free skeleton)
# ---------------------------------------------------------------------------


def count_derivations(grammar: Grammar, words: list[str], start: str) -> int:
    """Number of distinct derivation trees of ``start`` over the whole input."""
    n = len(words)
    memo: dict[tuple, int] = {}
    in_progress: set[tuple] = set()

    def count_cat(cat: str, i: int, j: int) -> int:
        key = (cat, i, j)
        if key in memo:
            return memo[key]
        if key in in_progress:
            raise RecursionError(f"unary cycle at {key}")
        in_progress.add(key)
        total = 0
        if j == i + 1:
            total += sum(1 for e in grammar.entries_for(words[i]) if e.category == cat)
        for rule in grammar.rules:
            if rule.lhs == cat:
                total += count_seq(rule.rhs, i, j)
        in_progress.discard(key)
        memo[key] = total
        return total

    def count_seq(symbols: tuple[str, ...], i: int, j: int) -> int:
        if not symbols:
            return 1 if i == j else 0
        head, rest = symbols[0], symbols[1:]
        total = 0
        lo = i + 1
        hi = j - (len(rest) - 0) if rest else j
        for k in range(lo, hi + 1):
            left = count_cat(head, i, k)
            if left:
                total += left * count_seq(rest, k, j)
        return total

    return count_cat(start, 0, n)


# ---------------------------------------------------------------------------
# Eager non-incremental enumerator (features, scores, deferred equations)
# ---------------------------------------------------------------------------

_EMPTY_WS = fs_at_path((MOTHER_FEATURE,), FeatureStructure.empty())


def _dedup_hypotheses(lattice: Lattice):
    # The chart scans best scores first (FIFO on ties) and suppresses
    # duplicate (word, span) hypotheses, so the kept one is the best-scored.
    best: dict[tuple, object] = {}
    for wh in lattice.hypotheses:
        key = (wh.word, wh.start, wh.end)
        if key not in best or wh.score > best[key].score:
            best[key] = wh
    return list(best.values())


def eager_forest(
    grammar: Grammar, lattice: Lattice, include_finals: bool, max_trees: int = 200_000
) -> Counter:
    """Multiset of (start, end, category, rendered fs, repr(score)) of every
    passive constituent any derivation supports, applying every equation
    (optionally including the deferred ones) eagerly, bottom-up."""
    hypotheses = _dedup_hypotheses(lattice)
    vertices = sorted({wh.start for wh in hypotheses} | {wh.end for wh in hypotheses})
    spans = [(i, j) for i in vertices for j in vertices if i < j]

    tree_memo: dict[tuple, list] = {}

    def trees(cat: str, i: int, j: int, guard: frozenset = frozenset()) -> list:
        key = (cat, i, j)
        if key in tree_memo:
            return tree_memo[key]
        if key in guard:
            raise RecursionError(f"unary cycle at {key}")
        guard = guard | {key}
        out = []
        for wh in hypotheses:
            if (wh.start, wh.end) == (i, j):
                for entry in grammar.entries_for(wh.word):
                    if entry.category == cat:
                        out.append(("lex", wh, entry))
        for rule in grammar.rules:
            if rule.lhs == cat:
                for children in seqs(rule.rhs, i, j, guard):
                    out.append(("rule", rule, children))
        tree_memo[key] = out
        return out

    def seqs(symbols: tuple[str, ...], i: int, j: int, guard: frozenset) -> list:
        if not symbols:
            return [[]] if i == j else []
        head, rest = symbols[0], symbols[1:]
        out = []
        for k in ([j] if not rest else [v for v in vertices if i < v <= j]):
            for left in trees(head, i, k, guard if (i, k) == (i, j) else frozenset()):
                for right in seqs(rest, k, j, guard):
                    out.append([(head, i, k, left)] + right)
        return out

    def structures(tree) -> list[tuple[FeatureStructure, float]]:
        kind = tree[0]
        if kind == "lex":
            _, wh, entry = tree
            fs: FeatureStructure | UnificationFailure = entry.fs
            if include_finals:
                for eq in entry.final_equations:
                    fs = unify_one_disjunct(fs, eq.disjunction, 0)
                    if isinstance(fs, UnificationFailure):
                        return []
            return [(fs, wh.score)]
        _, rule, children = tree
        results = [(_EMPTY_WS, 1.0)]
        for step, (cat, i, k, subtree) in enumerate(children, start=1):
            child_options = structures(subtree)
            grown = []
            for ws, score in results:
                for child_fs, child_score in child_options:
                    mother = child_fs.root.arcs.get(MOTHER_FEATURE) or Node()
                    graft = unify(ws, FeatureStructure(Node(arcs={str(step): mother})))
                    if isinstance(graft, UnificationFailure):
                        continue
                    for picks in itertools.product(
                        *[range(len(e.disjunction)) for e in rule.step_equations(step)]
                    ):
                        candidate: FeatureStructure | UnificationFailure = graft
                        for eq, pick in zip(rule.step_equations(step), picks):
                            candidate = unify_one_disjunct(candidate, eq.disjunction, pick)
                            if isinstance(candidate, UnificationFailure):
                                break
                        if not isinstance(candidate, UnificationFailure):
                            grown.append((candidate, score * child_score))
            results = grown
            if not results:
                return []
        if include_finals:
            finished = []
            for ws, score in results:
                candidate = ws
                for eq in rule.final_equations:
                    candidate = unify_one_disjunct(candidate, eq.disjunction, 0)
                    if isinstance(candidate, UnificationFailure):
                        break
                if not isinstance(candidate, UnificationFailure):
                    finished.append((candidate, score))
            results = finished
        return results

    forest: Counter = Counter()
    budget = max_trees
    for cat in sorted({r.lhs for r in grammar.rules} | {
        e.category for es in grammar.lexicon.values() for e in es
    }):
        for i, j in spans:
            for tree in trees(cat, i, j):
                budget -= 1
                if budget < 0:
                    raise RuntimeError("eager enumerator budget exceeded")
                for fs, score in structures(tree):
                    forest[(i, j, cat, fs.render(), repr(score))] += 1
    return forest


def chart_forest(state, final: bool) -> Counter:
    """The chart's passive constituents in the same shape as eager_forest."""
    forest: Counter = Counter()
    for edge in state.chart.passive_edges():
        if final:
            if edge.id in state.final_inconsistent:
                continue
            refined_id = state.refined.get(edge.id)
            reported = state.chart.get(refined_id) if refined_id is not None else edge
        else:
            reported = edge
        forest[
            (reported.start, reported.end, reported.category, reported.fs.render(), repr(reported.score))
        ] += 1
    return forest


# ---------------------------------------------------------------------------
# Exhaustive fragment-cover search
# ---------------------------------------------------------------------------


def exhaustive_max_cover(spans: list[tuple[int, int]]) -> int:
    """Maximum total covered length over all non-overlapping span subsets."""
    unique = sorted(set(spans))

    def best(remaining: tuple, busy_until: int) -> int:
        if not remaining:
            return 0
        head, *rest = remaining
        skip = best(tuple(rest), busy_until)
        if head[0] >= busy_until:
            take = (head[1] - head[0]) + best(tuple(rest), head[1])
            return max(skip, take)
        return skip

    return best(tuple(unique), -(10**9))
