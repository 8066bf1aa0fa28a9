"""PDDL subset: parsing, grounding, state semantics and pretty-printing."""

from .grounding import ground, ground_count
from .model import (
    ActionSchema,
    ArityError,
    Domain,
    Goal,
    GroundedAction,
    InapplicableActionError,
    LexError,
    Literal,
    ParseError,
    PddlError,
    Problem,
    RequirementError,
    SortError,
    UndeclaredPredicateError,
    applicable,
    apply,
    apply_unchecked,
    format_atom,
    parse_atom,
)
from .parser import parse_domain, parse_problem
from .printer import format_domain, format_problem
from .shipped import load_shipped_domain, shipped_domain_text

__all__ = [
    "ActionSchema", "ArityError", "Domain", "Goal", "GroundedAction", "InapplicableActionError", "LexError",
    "Literal", "ParseError", "PddlError", "Problem", "RequirementError", "SortError", "UndeclaredPredicateError",
    "applicable", "apply", "apply_unchecked", "format_atom", "parse_atom", "ground", "ground_count",
    "parse_domain", "parse_problem", "format_domain", "format_problem", "load_shipped_domain",
    "shipped_domain_text",
]
