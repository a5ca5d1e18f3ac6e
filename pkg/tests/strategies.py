"""Random generators: seeded feature structures and toy grammars.

The bulk suites drive these with ``random.Random`` for speed and exact
reproducibility; the hypothesis strategies wrap the same recipes for the
shrinking property tests.
"""

from __future__ import annotations

import random

from hypothesis import strategies as st

from anyparse.featstruct import FeatureStructure, Node
from anyparse.grammar import Grammar, parse_grammar_file, parse_lexicon_file

FEATURES = ("f", "g", "h", "k")
ATOMS = ("x", "y", "z")


def random_fs(
    rng: random.Random,
    max_nodes: int = 6,
    features: tuple[str, ...] = FEATURES,
    atoms: tuple[str, ...] = ATOMS,
    max_arcs_per_node: int = 3,
    max_total_arcs: int = 7,
) -> FeatureStructure:
    """A random acyclic structure; arcs only point to later nodes, and
    sharing a target node creates coreferences."""
    count = rng.randint(1, max_nodes)
    nodes = [Node() for _ in range(count)]
    # Mark some non-root nodes atomic (the root too, occasionally).
    for index, node in enumerate(nodes):
        if index == 0:
            if count == 1 and rng.random() < 0.2:
                node.atom = rng.choice(atoms)
            continue
        if rng.random() < 0.45:
            node.atom = rng.choice(atoms)
    budget = max_total_arcs
    for index, node in enumerate(nodes[:-1]):
        if node.is_atom:
            continue
        targets = list(range(index + 1, count))
        max_here = min(max_arcs_per_node, len(targets), len(features), budget)
        if max_here <= 0:
            continue
        n_arcs = rng.randint(0 if index else min(1, max_here), max_here)
        chosen_features = rng.sample(features, n_arcs)
        for feature in chosen_features:
            node.arcs[feature] = nodes[rng.choice(targets)]
            budget -= 1
    fs = FeatureStructure(nodes[0])
    fs.validate()
    return fs


@st.composite
def feature_structures(draw, max_nodes: int = 6) -> FeatureStructure:
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    return random_fs(random.Random(seed), max_nodes=max_nodes)


# ---------------------------------------------------------------------------
# Random toy grammars
# ---------------------------------------------------------------------------

TERMINALS = ("wa", "wb")


def random_cfg_text(rng: random.Random, n_categories: int = 4, n_rules: int = 5):
    """A random context-free skeleton (no equations).

    Unary rules always point to a strictly later category, so no unary
    cycle (and hence no infinite derivation set) can arise.
    """
    categories = [f"C{i}" for i in range(n_categories)]
    rules = []
    for _ in range(rng.randint(2, n_rules)):
        lhs_index = rng.randrange(n_categories)
        lhs = categories[lhs_index]
        if rng.random() < 0.25 and lhs_index < n_categories - 1:
            rhs = [categories[rng.randrange(lhs_index + 1, n_categories)]]
        else:
            rhs = [categories[rng.randrange(n_categories)] for _ in range(rng.randint(2, 3))]
        rules.append(f"Rule {lhs} -> {' '.join(rhs)}")
    lex = []
    for category in categories:
        for word in TERMINALS:
            if rng.random() < 0.55:
                lex.append(f"Lex {word} {category}")
    if not lex:
        lex.append(f"Lex {TERMINALS[0]} {categories[-1]}")
    return "\n".join(rules) + "\n", "\n".join(lex) + "\n", categories[0]


_EQ_FEATURES = ("agr", "sem")
_EQ_SUBFEATURES = ("num", "per")
_EQ_ATOMS = ("sg", "pl", "one", "two")


def _random_path(rng: random.Random) -> str:
    parts = [rng.choice(_EQ_FEATURES)]
    if rng.random() < 0.5:
        parts.append(rng.choice(_EQ_SUBFEATURES))
    return " ".join(parts)


def random_feature_grammar_text(rng: random.Random, n_categories: int = 3, n_rules: int = 5):
    """A random unification grammar: agreement corefs, value constraints,
    occasional disjunctions, occasional two-entry (ambiguous) words."""
    categories = [f"C{i}" for i in range(n_categories)]
    lines = []
    for _ in range(rng.randint(2, n_rules)):
        lhs_index = rng.randrange(n_categories)
        lhs = categories[lhs_index]
        if rng.random() < 0.2 and lhs_index < n_categories - 1:
            rhs = [categories[rng.randrange(lhs_index + 1, n_categories)]]
        else:
            rhs = [categories[rng.randrange(n_categories)] for _ in range(rng.randint(2, 3))]
        lines.append(f"Rule {lhs} -> {' '.join(rhs)}")
        for _ in range(rng.randint(0, 3)):
            kind = rng.random()
            if kind < 0.5:
                left = rng.randrange(0, len(rhs) + 1)
                right = rng.randrange(1, len(rhs) + 1)
                lines.append(f"    <{left} {_random_path(rng)}> = <{right} {_random_path(rng)}>")
            else:
                index = rng.randrange(0, len(rhs) + 1)
                value = rng.choice(_EQ_ATOMS)
                if rng.random() < 0.3:
                    other = rng.choice([a for a in _EQ_ATOMS if a != value])
                    lines.append(f"    <{index} {_random_path(rng)}> = {value} | {other}")
                else:
                    lines.append(f"    <{index} {_random_path(rng)}> = {value}")
    lex_lines = []
    for category in categories:
        for word in TERMINALS:
            if rng.random() < 0.6:
                lex_lines.append(f"Lex {word} {category}")
                if rng.random() < 0.6:
                    lex_lines.append(
                        f"    <0 {_random_path(rng)}> = {rng.choice(_EQ_ATOMS)}"
                    )
    if not lex_lines:
        lex_lines.append(f"Lex {TERMINALS[0]} {categories[-1]}")
    return "\n".join(lines) + "\n", "\n".join(lex_lines) + "\n", categories[0]


def build_grammar(grammar_text: str, lexicon_text: str) -> Grammar:
    return Grammar(parse_grammar_file(grammar_text), parse_lexicon_file(lexicon_text))


def random_words(rng: random.Random, max_len: int) -> list[str]:
    return [rng.choice(TERMINALS) for _ in range(rng.randint(1, max_len))]
