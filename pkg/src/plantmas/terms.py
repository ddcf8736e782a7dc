"""Logic-style terms: atoms, numbers, variables, and flat structures.

Belief bases and plan triggers are built from structures like
``switch(open)`` or ``cond_op(normal)``.  Arguments are atoms, numbers,
quoted strings, or variables (capitalised identifiers).  Stored beliefs
must be ground.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Optional, Union


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return self.name


Term = Union[str, int, float, Var, "Struct"]


@dataclass(frozen=True)
class Struct:
    """A functor with a flat tuple of argument terms. ``f`` is ``f()``."""

    functor: str
    args: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def __str__(self) -> str:
        if not self.args:
            return self.functor
        return f"{self.functor}({', '.join(_fmt(a) for a in self.args)})"

    __repr__ = __str__


def _fmt(arg: Term) -> str:
    if isinstance(arg, str):
        if _ATOM_RE.fullmatch(arg):
            return arg
        return '"' + arg.replace('"', '\\"') + '"'
    if isinstance(arg, float) and arg.is_integer():
        return f"{arg:.1f}"
    return str(arg)


class TermSyntaxError(ValueError):
    pass


_ATOM_RE = re.compile(r"[a-z][A-Za-z0-9_]*")

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<str>"(?:[^"\\]|\\.)*")
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<punct>[(),&])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise TermSyntaxError(f"cannot tokenize {rest!r} in {text!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        if self.i >= len(self.tokens):
            raise TermSyntaxError(f"unexpected end of input in {self.text!r}")
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val = self.next()
        if val != value:
            raise TermSyntaxError(f"expected {value!r}, got {val!r} in {self.text!r}")

    def parse_arg(self) -> Term:
        kind, val = self.next()
        if kind == "num":
            return float(val) if ("." in val or "e" in val or "E" in val) else int(val)
        if kind == "str":
            return val[1:-1].replace('\\"', '"')
        if kind == "ident":
            if val[0].isupper() or val[0] == "_":
                return Var(val)
            return val
        raise TermSyntaxError(f"unexpected token {val!r} in {self.text!r}")


def parse_struct(text: str) -> Struct:
    """Parse one structure, e.g. ``switch(open)`` or ``compressor_stopped``."""
    p = _Parser(text)
    s = _parse_struct(p)
    if p.peek() is not None:
        raise TermSyntaxError(f"trailing input after term in {text!r}")
    return s


def _parse_struct(p: _Parser) -> Struct:
    kind, val = p.next()
    if kind != "ident" or not _ATOM_RE.fullmatch(val):
        raise TermSyntaxError(f"expected functor, got {val!r} in {p.text!r}")
    functor = val
    args: list[Term] = []
    nxt = p.peek()
    if nxt and nxt[1] == "(":
        p.next()
        while True:
            args.append(p.parse_arg())
            kind2, val2 = p.next()
            if val2 == ")":
                break
            if val2 != ",":
                raise TermSyntaxError(f"expected ',' or ')' in {p.text!r}")
    return Struct(functor, tuple(args))


def parse_conjunction(text: str) -> list[Struct]:
    """Parse ``a(X) & b(Y)`` into a list of structures. Empty/``true`` -> []."""
    text = text.strip()
    if not text or text == "true":
        return []
    p = _Parser(text)
    out = [_parse_struct(p)]
    while p.peek() is not None:
        p.expect("&")
        out.append(_parse_struct(p))
    return out


Bindings = dict[str, Term]


def unify(pattern: Struct, ground: Struct, bindings: Optional[Bindings] = None) -> Optional[Bindings]:
    """Unify a pattern (may contain variables) against a ground structure.

    Returns extended bindings or ``None``.  Only the pattern side may
    contain variables; beliefs are ground by construction.
    """
    if pattern.functor != ground.functor or pattern.arity != ground.arity:
        return None
    b = dict(bindings) if bindings else {}
    for pa, ga in zip(pattern.args, ground.args):
        if isinstance(pa, Var):
            if pa.name in b:
                if b[pa.name] != ga:
                    return None
            else:
                b[pa.name] = ga
        elif pa != ga:
            return None
    return b


def substitute(term: Term, bindings: Bindings) -> Term:
    if isinstance(term, Var):
        return bindings.get(term.name, term)
    if isinstance(term, Struct):
        return Struct(term.functor, tuple(substitute(a, bindings) for a in term.args))
    return term


def solve_conjunction(
    patterns: list[Struct], beliefs: list[Struct], bindings: Optional[Bindings] = None
) -> Iterator[Bindings]:
    """Yield binding sets satisfying all patterns against the belief list.

    Beliefs are tried in list (insertion) order; variables bind to the
    first match, with backtracking across the conjunction.
    """
    b0 = dict(bindings) if bindings else {}
    if not patterns:
        yield b0
        return
    head, rest = patterns[0], patterns[1:]
    for belief in beliefs:
        b1 = unify(Struct(head.functor, tuple(substitute(a, b0) for a in head.args)), belief, {})
        if b1 is not None:
            merged = dict(b0)
            merged.update(b1)
            yield from solve_conjunction(rest, beliefs, merged)
