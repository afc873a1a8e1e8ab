"""Bundled subject programs, grammars and finitizations."""
from __future__ import annotations

from importlib import resources

from ..subjectlang import Program, load

PROGRAMS = ("multiply", "multiply_pex", "bsearch", "leapyear", "linkedlist")
GRAMMARS = ("parens", "intexpr")


def source(name: str) -> str:
    """Text of a bundled file, e.g. ``source("bsearch.mini")``."""
    return resources.files(__package__).joinpath(name).read_text()


def program(name: str) -> Program:
    return load(source(f"{name}.mini"), f"{name}.mini")


def path(name: str) -> str:
    return str(resources.files(__package__).joinpath(name))


def fin_ll(nodes: int, min_size: int, max_size: int) -> str:
    """Finitization text for the linked list: ``nodes`` elements, size in [min_size, max_size].

    Element data is pinned to the single value 0.
    """
    return (
        "root LinkedList\n"
        f"pool LinkedListElement {nodes}\n"
        f"LinkedList.size = {min_size}..{max_size}\n"
        "LinkedListElement.Data = 0..0\n"
    )
