import sys

import pytest

from symfin.expr import SymbolTable
from symfin.models import catalog


@pytest.fixture
def table() -> SymbolTable:
    return SymbolTable.build(constants=["k", "c"], functions=["P1", "Q1"])


@pytest.fixture
def bs2d_example():
    return catalog("bs2d_canonical", {"phi1": "1", "phi2": "11/10", "k": "1/20"})


@pytest.fixture
def cli_argv(monkeypatch):
    """Set sys.argv for the settings parser, which reads it on construction."""

    def set_argv(*args: str) -> None:
        monkeypatch.setattr(sys, "argv", ["symfin", *args])

    set_argv()
    return set_argv
