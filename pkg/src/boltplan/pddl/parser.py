"""Reader for the supported PDDL subset (:strips, :typing, :negative-preconditions)."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    SUPPORTED_REQUIREMENTS,
    ActionSchema,
    ArityError,
    Domain,
    Goal,
    LexError,
    Literal,
    ParseError,
    PddlError,
    PredicateDecl,
    Problem,
    RequirementError,
    SortError,
    UndeclaredPredicateError,
)

_TOKEN = re.compile(r"[A-Za-z?:][A-Za-z0-9_\-]*|-|\(|\)")


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    col: int


class Node(list):
    """A parenthesised list of Tokens/Nodes remembering where it opened."""

    def __init__(self, line: int, col: int):
        super().__init__()
        self.line = line
        self.col = col


def tokenize(text: str) -> list[Token]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        i = 0
        n = len(line)
        while i < n:
            c = line[i]
            if c == ";":
                break
            if c.isspace():
                i += 1
                continue
            m = _TOKEN.match(line, i)
            if not m:
                raise LexError(f"unexpected character {c!r}", lineno, i + 1)
            out.append(Token(m.group(0).lower(), lineno, i + 1))
            i = m.end()
    return out


def read_sexpr(text: str) -> Node:
    tokens = tokenize(text)
    if not tokens:
        raise ParseError("empty input", 1, 1)
    stack: list[Node] = []
    root = None
    for tok in tokens:
        if tok.text == "(":
            node = Node(tok.line, tok.col)
            if stack:
                stack[-1].append(node)
            elif root is not None:
                raise ParseError("unexpected text after top-level expression", tok.line, tok.col)
            else:
                root = node
            stack.append(node)
        elif tok.text == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.line, tok.col)
            stack.pop()
        else:
            if not stack:
                raise ParseError(f"token {tok.text!r} outside parentheses", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        n = stack[-1]
        raise ParseError("unbalanced '(' never closed", n.line, n.col)
    return root


def _where(x) -> tuple[int, int]:
    return (x.line, x.col)


def _word(x, what: str) -> str:
    if not isinstance(x, Token):
        raise ParseError(f"expected {what}", *_where(x))
    return x.text


def _typed_list(items, default: str = "object") -> list[tuple[str, str, Token]]:
    """Parse ``a b - t c - u d`` into (name, sort, token) triples."""
    out, pending = [], []
    i = 0
    while i < len(items):
        x = items[i]
        if isinstance(x, Node):
            raise ParseError("unexpected list in typed list", *_where(x))
        if x.text == "-":
            if i + 1 >= len(items) or not isinstance(items[i + 1], Token):
                raise ParseError("missing type after '-'", x.line, x.col)
            sort = items[i + 1].text
            out += [(t.text, sort, t) for t in pending]
            pending = []
            i += 2
            continue
        pending.append(x)
        i += 1
    out += [(t.text, default, t) for t in pending]
    return out


def _head(node, expected: str):
    if not isinstance(node, Node) or not node or not isinstance(node[0], Token) or node[0].text != expected:
        where = _where(node) if hasattr(node, "line") else (None, None)
        raise ParseError(f"expected ({expected} ...)", *where)


def _literals(node, allow_negative: bool, what: str) -> list[Literal]:
    if not isinstance(node, Node):
        raise ParseError(f"expected a {what} formula", *_where(node))
    if not node:
        return []
    if isinstance(node[0], Token) and node[0].text == "and":
        out = []
        for sub in node[1:]:
            out += _literals(sub, allow_negative, what)
        return out
    if isinstance(node[0], Token) and node[0].text == "not":
        if len(node) != 2 or not isinstance(node[1], Node):
            raise ParseError("malformed (not ...)", *_where(node))
        if not allow_negative:
            raise RequirementError("negative literal requires :negative-preconditions", *_where(node))
        (lit,) = _literals(node[1], False, what)
        return [Literal(lit.predicate, lit.args, True, lit.pos)]
    name = _word(node[0], "predicate name")
    if name in ("or", "imply", "forall", "exists", "when", "="):
        raise ParseError(f"unsupported connective {name!r}", *_where(node[0]))
    args = tuple(_word(a, "argument") for a in node[1:])
    return [Literal(name, args, False, _where(node))]


def _check_literal(lit: Literal, predicates: dict, arg_sorts, domain_types, is_sub) -> None:
    line, col = lit.pos if lit.pos else (None, None)
    decl = predicates.get(lit.predicate)
    if decl is None:
        raise UndeclaredPredicateError(f"undeclared predicate {lit.predicate!r}", line, col)
    if decl.arity != len(lit.args):
        raise ArityError(f"{lit.predicate} expects {decl.arity} arguments, got {len(lit.args)}", line, col)
    for a, (_, want) in zip(lit.args, decl.params):
        have = arg_sorts(a, line, col)
        if not is_sub(have, want):
            raise SortError(f"argument {a} of sort {have} does not fit {want} in {lit.predicate}", line, col)


def parse_domain(text: str) -> Domain:
    root = read_sexpr(text)
    _head(root, "define")
    if len(root) < 2:
        raise ParseError("empty define", *_where(root))
    hdr = root[1]
    _head(hdr, "domain")
    name = _word(hdr[1], "domain name")
    requirements: list[str] = []
    types: dict = {}
    predicates: dict = {}
    actions: list[ActionSchema] = []
    saw_types = False
    for sec in root[2:]:
        if not isinstance(sec, Node) or not sec or not isinstance(sec[0], Token):
            raise ParseError("expected a domain section", *_where(sec))
        key = sec[0].text
        if key == ":requirements":
            for r in sec[1:]:
                t = _word(r, "requirement")
                if t not in SUPPORTED_REQUIREMENTS:
                    raise RequirementError(f"unknown requirement {t}", r.line, r.col)
                requirements.append(t)
        elif key == ":types":
            if ":typing" not in requirements:
                raise RequirementError(":types section requires :typing", sec.line, sec.col)
            saw_types = True
            for t, parent, _ in _typed_list(sec[1:]):
                types[t] = parent
            for parent in list(types.values()):
                if parent != "object" and parent not in types:
                    types[parent] = "object"
        elif key == ":predicates":
            for p in sec[1:]:
                if not isinstance(p, Node) or not p:
                    raise ParseError("malformed predicate declaration", *_where(p))
                pname = _word(p[0], "predicate name")
                params = tuple((v, s) for v, s, _ in _typed_list(p[1:]))
                predicates[pname] = PredicateDecl(pname, params)
        elif key == ":action":
            actions.append(_parse_action(sec, requirements))
        else:
            raise ParseError(f"unsupported domain section {key}", sec[0].line, sec[0].col)
    known_sorts = set(types) | {"object"}
    for decl in predicates.values():
        for _, s in decl.params:
            if s not in known_sorts:
                raise SortError(f"unknown sort {s} in predicate {decl.name}")
    dom = Domain(name, tuple(requirements), types, predicates, tuple(actions))
    for act in actions:
        params = dict(act.params)
        for _, s in act.params:
            if s not in known_sorts:
                raise SortError(f"unknown sort {s} in action {act.name}", *(act.pos or (None, None)))

        def arg_sort(a, line, col, params=params, act=act):
            if a not in params:
                raise ParseError(f"variable {a} not among parameters of {act.name}", line, col)
            return params[a]

        for lit in act.precondition + act.add + act.delete:
            _check_literal(lit, predicates, arg_sort, types, dom.is_subsort)
        clash = {l.atom for l in act.add} & {l.atom for l in act.delete}
        if clash:
            raise ParseError(f"action {act.name} both adds and deletes {sorted(clash)}", *(act.pos or (None, None)))
    del saw_types
    return dom


def _parse_action(sec: Node, requirements) -> ActionSchema:
    if len(sec) < 2:
        raise ParseError("action without a name", sec.line, sec.col)
    name = _word(sec[1], "action name")
    fields = {}
    i = 2
    while i < len(sec):
        k = _word(sec[i], "action field")
        if k not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"unsupported action field {k}", sec[i].line, sec[i].col)
        if i + 1 >= len(sec):
            raise ParseError(f"missing value for {k}", sec[i].line, sec[i].col)
        fields[k] = sec[i + 1]
        i += 2
    params_node = fields.get(":parameters", Node(sec.line, sec.col))
    if not isinstance(params_node, Node):
        raise ParseError("parameters must be a list", *_where(params_node))
    params = tuple((v, s) for v, s, _ in _typed_list(params_node))
    for v, _ in params:
        if not v.startswith("?"):
            raise ParseError(f"parameter {v} must start with '?'", sec.line, sec.col)
    neg_ok = ":negative-preconditions" in requirements
    pre = tuple(_literals(fields[":precondition"], neg_ok, "precondition")) if ":precondition" in fields else ()
    eff = _literals(fields[":effect"], True, "effect") if ":effect" in fields else []
    add = tuple(l for l in eff if not l.negated)
    delete = tuple(Literal(l.predicate, l.args, False, l.pos) for l in eff if l.negated)
    return ActionSchema(name, params, pre, add, delete, (sec.line, sec.col))


def parse_problem(text: str, domain: Domain) -> Problem:
    root = read_sexpr(text)
    _head(root, "define")
    hdr = root[1] if len(root) > 1 else None
    _head(hdr, "problem")
    name = _word(hdr[1], "problem name")
    dom_name = None
    objects: dict = {}
    init: set = set()
    goal = Goal()
    known_sorts = set(domain.types) | {"object"}
    init_lits: list[Literal] = []
    goal_lits: list[Literal] = []
    for sec in root[2:]:
        if not isinstance(sec, Node) or not sec or not isinstance(sec[0], Token):
            raise ParseError("expected a problem section", *_where(sec))
        key = sec[0].text
        if key == ":domain":
            dom_name = _word(sec[1], "domain name")
            if dom_name != domain.name:
                raise ParseError(f"problem is for domain {dom_name}, not {domain.name}", sec.line, sec.col)
        elif key == ":objects":
            for o, s, tok in _typed_list(sec[1:]):
                if s not in known_sorts:
                    raise SortError(f"unknown sort {s} for object {o}", tok.line, tok.col)
                objects[o] = s
        elif key == ":init":
            for x in sec[1:]:
                init_lits += _literals(x, False, "init")
        elif key == ":goal":
            if len(sec) != 2:
                raise ParseError("goal takes exactly one formula", sec.line, sec.col)
            goal_lits = _literals(sec[1], ":negative-preconditions" in domain.requirements, "goal")
        else:
            raise ParseError(f"unsupported problem section {key}", sec[0].line, sec[0].col)

    def arg_sort(a, line, col):
        if a not in objects:
            raise SortError(f"unknown object {a}", line, col)
        return objects[a]

    for lit in init_lits + goal_lits:
        _check_literal(lit, domain.predicates, arg_sort, domain.types, domain.is_subsort)
    init = frozenset(l.atom for l in init_lits)
    goal = Goal(frozenset(l.atom for l in goal_lits if not l.negated),
                frozenset(l.atom for l in goal_lits if l.negated))
    return Problem(name, dom_name or domain.name, objects, init, goal)


def parse_error_location(err: PddlError) -> tuple[int | None, int | None]:
    return err.line, err.col
