"""Feature structures: rooted acyclic attribute graphs with structure sharing.

A feature structure describes partial information about a linguistic object
as a rooted, directed, acyclic graph.  Every node is either *atomic* (it
carries a symbol and nothing else) or *complex* (it carries a set of
uniquely-labelled arcs to other nodes).  Two paths that lead to the very
same node are *coreferent*: they are constrained to stay equal under any
further refinement.  Coreference is always expressed through node identity,
never through parallel equal subgraphs.

Structures are value-like: once built they are never mutated, so they can
be shared freely between threads and embedded into other structures without
copying.  ``unify`` is correspondingly non-destructive; it returns a fresh
structure (the least upper bound of its inputs in the subsumption order) or
a :class:`UnificationFailure` naming the path where the inputs clash.

The textual notation used by grammar files, tests and debug output looks
like this::

    [subj: #1[num: sg], agr: #1, tense: past]

Square brackets delimit complex nodes, a bare symbol is an atom, and
``#n`` tags mark shared nodes: the first occurrence carries the node's
body, later occurrences are plain references.  A ``#n`` that never gets a
body denotes a shared *empty* node.  ``[]`` is the empty structure, which
carries no information at all.
"""

from __future__ import annotations

import re
from collections import Counter, deque
from dataclasses import dataclass

Path = tuple[str, ...]


class FeatureStructureError(Exception):
    """A malformed structure or an illegal operation on one."""


class CyclicStructureError(FeatureStructureError):
    """A cycle was found at load time or was produced by unification.

    Cyclic structures are not supported; running into one is a hard
    program error, not a unification failure.
    """


class NotationError(FeatureStructureError):
    """The textual notation could not be parsed."""


@dataclass(frozen=True)
class UnificationFailure:
    """Why two structures would not unify.

    This is normal control flow, not an error: grammars are expected to
    rule out combinations through clashes.  The path is the shortest one
    (breadth-first discovery order, left operand first) at which the clash
    was found.  Instances are falsy so ``if not result:`` reads naturally.
    """

    path: Path
    reason: str

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"UnificationFailure(<{' '.join(self.path)}>, {self.reason!r})"


class Node:
    """One graph node: an atom, or a mapping from feature names to nodes."""

    __slots__ = ("atom", "arcs")

    def __init__(self, atom: str | None = None, arcs: dict[str, "Node"] | None = None):
        if atom is not None and arcs:
            raise FeatureStructureError("a node is atomic xor complex")
        self.atom = atom
        self.arcs: dict[str, Node] = dict(arcs) if arcs else {}

    @property
    def is_atom(self) -> bool:
        return self.atom is not None

    def __repr__(self) -> str:
        return f"Node(atom={self.atom!r}, arcs={sorted(self.arcs)})"


class FeatureStructure:
    """An immutable rooted feature graph.

    The constructor trusts its argument; use :meth:`validate` after building
    nodes by hand.  All public operations leave existing structures
    untouched.
    """

    __slots__ = ("root",)

    def __init__(self, root: Node):
        self.root = root

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls) -> "FeatureStructure":
        return cls(Node())

    @classmethod
    def atom(cls, value: str) -> "FeatureStructure":
        return cls(Node(atom=value))

    @classmethod
    def from_text(cls, text: str) -> "FeatureStructure":
        """Parse the bracketed notation described in the module docstring."""
        return _parse(text)

    # -- inspection --------------------------------------------------------

    def follow(self, path: Path) -> Node | None:
        """The node reached by ``path`` from the root, or None if any arc
        is missing (including a traversal into an atom)."""
        node = self.root
        for feature in path:
            if node.is_atom:
                return None
            node = node.arcs.get(feature)
            if node is None:
                return None
        return node

    def atom_at(self, path: Path) -> str | None:
        node = self.follow(path)
        return node.atom if node is not None else None

    def nodes(self) -> list[Node]:
        """Every reachable node, in a deterministic preorder."""
        out: list[Node] = []
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            out.append(node)
            stack.extend(reversed(list(node.arcs.values())))
        return out

    def validate(self) -> None:
        """Raise if the graph is cyclic or mixes atom and arcs on a node."""
        WHITE, GREY = 0, 1
        state: dict[int, int] = {}
        stack: list[tuple[Node, bool]] = [(self.root, False)]
        while stack:
            node, leaving = stack.pop()
            if leaving:
                state[id(node)] = 2
                continue
            colour = state.get(id(node), WHITE)
            if colour == GREY:
                raise CyclicStructureError("cycle detected in feature structure")
            if colour != WHITE:
                continue
            if node.atom is not None and node.arcs:
                raise FeatureStructureError("a node is atomic xor complex")
            state[id(node)] = GREY
            stack.append((node, True))
            stack.extend((child, False) for child in node.arcs.values())

    # -- copying -----------------------------------------------------------

    def copy(self) -> "FeatureStructure":
        """A structurally fresh copy with the same sharing topology."""
        memo: dict[int, Node] = {}

        def rec(node: Node) -> Node:
            made = memo.get(id(node))
            if made is not None:
                return made
            made = Node(atom=node.atom)
            memo[id(node)] = made
            for feature, child in node.arcs.items():
                made.arcs[feature] = rec(child)
            return made

        return FeatureStructure(rec(self.root))

    # -- information ordering ----------------------------------------------

    def subsumes(self, other: "FeatureStructure") -> bool:
        """True iff everything this structure claims also holds in ``other``.

        Claims are atoms at paths, arc presence, and path equalities via
        shared complex nodes.  Sharing between *atomic* nodes carries no
        information beyond the atoms being equal, so it is ignored on both
        sides (an atom admits no further refinement that could tell the two
        situations apart).
        """
        mapping: dict[int, Node] = {}
        stack = [(_intern_atoms(self.root), _intern_atoms(other.root))]
        while stack:
            x, y = stack.pop()
            known = mapping.get(id(x))
            if known is not None:
                if known is not y:
                    return False
                continue
            mapping[id(x)] = y
            if x.atom is not None:
                if y.atom != x.atom:
                    return False
                continue
            for feature, cx in x.arcs.items():
                if y.is_atom:
                    return False
                cy = y.arcs.get(feature)
                if cy is None:
                    return False
                stack.append((cx, cy))
        return True

    def isomorphic(self, other: "FeatureStructure") -> bool:
        """Mutual subsumption: the two structures carry the same information."""
        return self.subsumes(other) and other.subsumes(self)

    # -- rendering -----------------------------------------------------------

    def render(self) -> str:
        """Canonical text form: arcs sorted by name, shared complex nodes
        tagged ``#1, #2, ...`` in visit order.  Equal information renders
        equally, so renderings can be compared byte-for-byte."""
        root = _intern_atoms(self.root)
        arrivals: Counter[int] = Counter()
        seen: set[int] = set()
        stack = [root]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            for child in node.arcs.values():
                if not child.is_atom:
                    arrivals[id(child)] += 1
                    stack.append(child)
        shared = {nid for nid, n in arrivals.items() if n >= 2}
        tags: dict[int, int] = {}

        def rec(node: Node) -> str:
            if node.is_atom:
                return node.atom  # type: ignore[return-value]
            prefix = ""
            if id(node) in shared:
                tag = tags.get(id(node))
                if tag is not None:
                    return f"#{tag}"
                tag = len(tags) + 1
                tags[id(node)] = tag
                prefix = f"#{tag}"
            inner = ", ".join(
                f"{feature}: {rec(node.arcs[feature])}" for feature in sorted(node.arcs)
            )
            return f"{prefix}[{inner}]"

        return rec(root)

    def __repr__(self) -> str:
        return self.render()


# ---------------------------------------------------------------------------
# Unification
# ---------------------------------------------------------------------------


def unify(a: FeatureStructure, b: FeatureStructure) -> FeatureStructure | UnificationFailure:
    """Least upper bound of ``a`` and ``b``, or a :class:`UnificationFailure`.

    Neither input is modified.  Coreferences from both inputs survive and
    may merge.  If merging the inputs would create a cyclic graph (which
    acyclic inputs can force through crossing coreferences), that is a hard
    :class:`CyclicStructureError`, not a failure value.
    """
    a.validate()
    b.validate()

    parent: dict[int, Node] = {}
    cls_atom: dict[int, str | None] = {}
    cls_arcs: dict[int, dict[str, Node]] = {}

    def find(node: Node) -> Node:
        while True:
            up = parent.get(id(node))
            if up is None:
                return node
            node = up

    def atom_of(rep: Node) -> str | None:
        return cls_atom[id(rep)] if id(rep) in cls_atom else rep.atom

    def arcs_of(rep: Node) -> dict[str, Node]:
        return cls_arcs[id(rep)] if id(rep) in cls_arcs else rep.arcs

    queue: deque[tuple[Node, Node, Path]] = deque()
    queue.append((a.root, b.root, ()))
    while queue:
        x, y, path = queue.popleft()
        rx, ry = find(x), find(y)
        if rx is ry:
            continue
        ax, ay = atom_of(rx), atom_of(ry)
        arcs_x, arcs_y = arcs_of(rx), arcs_of(ry)
        if ax is not None and ay is not None and ax != ay:
            return UnificationFailure(path, f"atom clash: {ax} vs {ay}")
        if (ax is not None and arcs_y) or (ay is not None and arcs_x):
            return UnificationFailure(path, "atomic value vs complex structure")
        parent[id(ry)] = rx
        cls_atom[id(rx)] = ax if ax is not None else ay
        merged = dict(arcs_x)
        for feature, cy in arcs_y.items():
            cx = merged.get(feature)
            if cx is None:
                merged[feature] = cy
            else:
                queue.append((cx, cy, path + (feature,)))
        cls_arcs[id(rx)] = merged

    memo: dict[int, Node] = {}
    building: set[int] = set()

    def build(rep: Node) -> Node:
        made = memo.get(id(rep))
        if made is not None:
            return made
        if id(rep) in building:
            raise CyclicStructureError("unification produced a cyclic structure")
        building.add(id(rep))
        children = {feature: build(find(child)) for feature, child in arcs_of(rep).items()}
        building.discard(id(rep))
        made = Node(atom=atom_of(rep), arcs=children)
        memo[id(rep)] = made
        return made

    return FeatureStructure(build(find(a.root)))


@dataclass(frozen=True)
class Disjunction:
    """Alternative structures offered by one grammar constraint.

    Alternatives keep the grammar-file order so exploration is
    deterministic; trying one alternative is the caller's unit of work.
    """

    alternatives: tuple[FeatureStructure, ...]
    origin: str = ""

    def __post_init__(self) -> None:
        if not self.alternatives:
            raise FeatureStructureError("a disjunction needs at least one alternative")

    def __len__(self) -> int:
        return len(self.alternatives)


def unify_one_disjunct(
    a: FeatureStructure, d: Disjunction, index: int
) -> FeatureStructure | UnificationFailure:
    """Unify ``a`` with one chosen alternative of ``d``."""
    if not 0 <= index < len(d.alternatives):
        raise IndexError(f"disjunct index {index} out of range for {d.origin or d!r}")
    return unify(a, d.alternatives[index])


def subsumes(a: FeatureStructure, b: FeatureStructure) -> bool:
    return a.subsumes(b)


# ---------------------------------------------------------------------------
# Builders used by grammar compilation
# ---------------------------------------------------------------------------


def fs_at_path(path: Path, value: FeatureStructure) -> FeatureStructure:
    """A structure whose only content is ``value`` hanging at ``path``."""
    node = value.copy().root
    for feature in reversed(path):
        node = Node(arcs={feature: node})
    return FeatureStructure(node)


def coref_fs(p: Path, q: Path) -> FeatureStructure:
    """A structure asserting nothing but that paths ``p`` and ``q`` corefer."""
    target = Node()
    root = Node()
    paths = (p,) if p == q else (p, q)
    for path in paths:
        node = root
        for feature in path[:-1]:
            node = node.arcs.setdefault(feature, Node())
        if path:
            if path[-1] in node.arcs:
                raise FeatureStructureError(f"paths {p} and {q} collide")
            node.arcs[path[-1]] = target
        else:
            raise FeatureStructureError("a coreference path must be non-empty")
    fs = FeatureStructure(root)
    fs.validate()
    return fs


def _intern_atoms(root: Node) -> Node:
    """Copy of the graph with all equal atoms collapsed onto one node."""
    atoms: dict[str, Node] = {}
    memo: dict[int, Node] = {}

    def rec(node: Node) -> Node:
        if node.is_atom:
            made = atoms.get(node.atom)  # type: ignore[arg-type]
            if made is None:
                made = Node(atom=node.atom)
                atoms[node.atom] = made  # type: ignore[index]
            return made
        made = memo.get(id(node))
        if made is not None:
            return made
        made = Node()
        memo[id(node)] = made
        for feature, child in node.arcs.items():
            made.arcs[feature] = rec(child)
        return made

    return rec(root)


# ---------------------------------------------------------------------------
# Notation parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<lbr>\[) | (?P<rbr>\]) | (?P<colon>:) | (?P<comma>,) |
        (?P<tag>\#\d+) |
        (?P<sym>[A-Za-z0-9_][A-Za-z0-9_'\-]*)
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            if text[pos:].strip():
                raise NotationError(f"bad character at {pos}: {text[pos:pos + 10]!r}")
            break
        pos = match.end()
        kind = match.lastgroup
        assert kind is not None
        tokens.append((kind, match.group(kind)))
    return tokens


def _parse(text: str) -> FeatureStructure:
    tokens = _tokenize(text)
    if not tokens:
        raise NotationError("empty feature structure text")
    pos = 0
    tagged: dict[str, Node] = {}
    defined: set[str] = set()

    def peek() -> tuple[str, str] | None:
        return tokens[pos] if pos < len(tokens) else None

    def take(kind: str) -> str:
        nonlocal pos
        tok = peek()
        if tok is None or tok[0] != kind:
            raise NotationError(f"expected {kind}, found {tok[1] if tok else 'end of input'}")
        pos += 1
        return tok[1]

    def parse_node() -> Node:
        nonlocal pos
        tok = peek()
        if tok is None:
            raise NotationError("unexpected end of input")
        kind, value = tok
        if kind == "sym":
            pos += 1
            return Node(atom=value)
        if kind == "tag":
            pos += 1
            node = tagged.setdefault(value, Node())
            nxt = peek()
            if nxt is not None and nxt[0] == "lbr":
                if value in defined:
                    raise NotationError(f"tag {value} defined twice")
                defined.add(value)
                fill_complex(node)
            return node
        if kind == "lbr":
            node = Node()
            fill_complex(node)
            return node
        raise NotationError(f"unexpected token {value!r}")

    def fill_complex(node: Node) -> None:
        take("lbr")
        tok = peek()
        if tok is not None and tok[0] == "rbr":
            take("rbr")
            return
        while True:
            feature = take("sym")
            take("colon")
            child = parse_node()
            if feature in node.arcs:
                raise NotationError(f"duplicate feature {feature!r}")
            node.arcs[feature] = child
            tok = peek()
            if tok is not None and tok[0] == "comma":
                take("comma")
                continue
            take("rbr")
            return

    root = parse_node()
    if pos != len(tokens):
        raise NotationError(f"trailing input after structure: {tokens[pos][1]!r}")
    fs = FeatureStructure(root)
    fs.validate()
    return fs
