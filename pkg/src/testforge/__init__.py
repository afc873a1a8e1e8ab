"""Test generation for a small imperative language: concolic exploration,
bounded-exhaustive heap generation, random and grammar-based inputs, and
operation-sequence exploration."""
from .subjectlang import load

__version__ = "0.1.0"
__all__ = ["load", "__version__"]
