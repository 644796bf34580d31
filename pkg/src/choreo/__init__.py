"""Choreographies coordinated by connector automata: parsing, execution,
compatibility checking, projection to process networks, and a correspondence
harness that cross-checks the two semantics."""

from .core import InputError

__all__ = ["InputError"]
__version__ = "0.1.0"
