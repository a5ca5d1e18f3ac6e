from __future__ import annotations

from pathlib import Path

import pytest

from anyparse.grammar import Grammar, Lattice, load_grammar, load_lattice, load_lexicon

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_fixture(name: str) -> tuple[Grammar, Lattice]:
    grammar = Grammar(
        load_grammar(FIXTURES / f"{name}.grammar"),
        load_lexicon(FIXTURES / f"{name}.lexicon"),
    )
    return grammar, load_lattice(FIXTURES / f"{name}.lattice")


@pytest.fixture
def toy():
    return load_fixture("toy")


@pytest.fixture
def ambig():
    return load_fixture("ambig")


@pytest.fixture
def final():
    return load_fixture("final")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
