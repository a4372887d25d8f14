"""Formula AST and parser for the event-semantics fragment.

Grammar (ASCII)::

    formula := quant | impl
    quant   := ("exists" | "forall") var+ "." formula
    impl    := conj ["->" formula]
    conj    := unary {"&" unary}
    unary   := "~" unary | atom | "(" formula ")"
    atom    := ident "(" term {"," term} ")"

Identifiers match ``[a-z_][a-z0-9_-]*``.  A term is a variable when an
enclosing quantifier binds it; otherwise it must be a declared constant.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Union


class FormulaError(ValueError):
    pass


class ParseError(FormulaError):
    def __init__(self, msg, line, col):
        super().__init__(f"{msg} at line {line}, column {col}")
        self.line = line
        self.col = col


class UnboundVariableError(FormulaError):
    pass


class ArityError(FormulaError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self):
        return self.name


Term = Union[Var, Const]


@dataclass(frozen=True)
class Pred:
    name: str
    args: tuple

    def __str__(self):
        return f"{self.name}({','.join(map(str, self.args))})"


@dataclass(frozen=True)
class Not:
    body: "Formula"

    def __str__(self):
        return f"~{_wrap(self.body)}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"{_wrap(self.left, left_of_and=True)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"

    def __str__(self):
        return f"{_wrap(self.left)} -> {self.right}"


@dataclass(frozen=True)
class Exists:
    vars: tuple
    body: "Formula"

    def __str__(self):
        return f"exists {' '.join(v.name for v in self.vars)}. {self.body}"


@dataclass(frozen=True)
class Forall:
    vars: tuple
    body: "Formula"

    def __str__(self):
        return f"forall {' '.join(v.name for v in self.vars)}. {self.body}"


Formula = Union[Pred, Not, And, Implies, Exists, Forall]


def _wrap(f, left_of_and=False):
    # '&' groups to the left, so only a left operand may be a bare conjunction
    if isinstance(f, (Pred, Not)) or (left_of_and and isinstance(f, And)):
        return str(f)
    return f"({f})"


def conjuncts(f) -> list:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [f]


def predicates(f) -> Iterator[Pred]:
    if isinstance(f, Pred):
        yield f
    elif isinstance(f, Not):
        yield from predicates(f.body)
    elif isinstance(f, (And, Implies)):
        yield from predicates(f.left)
        yield from predicates(f.right)
    elif isinstance(f, (Exists, Forall)):
        yield from predicates(f.body)


def arities(formulas: Iterable, known: dict | None = None) -> dict:
    """Predicate name -> arity; raises ArityError on a conflict."""
    table = {} if known is None else known
    for f in formulas:
        for p in predicates(f):
            prev = table.setdefault(p.name, len(p.args))
            if prev != len(p.args):
                raise ArityError(f"predicate {p.name!r} used with arity {prev} "
                                 f"and {len(p.args)}")
    return table


def constants(f) -> set:
    return {a.name for p in predicates(f) for a in p.args if isinstance(a, Const)}


# -- parser --------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<arrow>->)
  | (?P<ident>[a-z_](?:[a-z0-9_]|-(?!>))*)
  | (?P<punct>[~&().,])
""", re.VERBOSE)

_KEYWORDS = {"exists", "forall"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for i, ch in enumerate(m.group(), pos):
                if ch == "\n":
                    line, line_start = line + 1, i + 1
        else:
            word = m.group()
            if kind == "ident" and word in _KEYWORDS:
                kind = word
            elif kind in ("punct", "arrow"):
                kind = word
            toks.append(_Tok(kind, word, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text, constants):
        self.toks = _tokenize(text)
        self.i = 0
        self.constants = constants
        self.scope = []          # stack of {source name: Var}
        self.used_names = set()  # bound-variable names already taken

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None):
        tok = self.toks[self.i]
        if kind is not None and tok.kind != kind:
            want = kind if kind != "ident" else "identifier"
            got = tok.text or "end of input"
            raise ParseError(f"expected {want}, got {got!r}", tok.line, tok.col)
        self.i += 1
        return tok

    def parse(self):
        f = self.formula()
        self.take("eof")
        return f

    def formula(self):
        if self.peek().kind in _KEYWORDS:
            return self.quant()
        return self.impl()

    def quant(self):
        kw = self.take().kind
        names = [self.take("ident")]
        while self.peek().kind == "ident":
            names.append(self.take())
        self.take(".")
        frame = {}
        for tok in names:
            frame[tok.text] = self._fresh(tok.text)
        self.scope.append(frame)
        try:
            body = self.formula()
        finally:
            self.scope.pop()
        cls = Exists if kw == "exists" else Forall
        return cls(tuple(frame[t.text] for t in names), body)

    def _fresh(self, name):
        new, k = name, 0
        while new in self.used_names:
            k += 1
            new = f"{name}'{k}"
        self.used_names.add(new)
        return Var(new)

    def impl(self):
        left = self.conj()
        if self.peek().kind == "->":
            self.take()
            return Implies(left, self.formula())
        return left

    def conj(self):
        f = self.unary()
        while self.peek().kind == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self):
        tok = self.peek()
        if tok.kind == "~":
            self.take()
            return Not(self.unary())
        if tok.kind == "(":
            self.take()
            f = self.formula()
            self.take(")")
            return f
        if tok.kind == "ident":
            return self.atom()
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.line, tok.col)

    def atom(self):
        name = self.take("ident")
        self.take("(")
        args = [self.term()]
        while self.peek().kind == ",":
            self.take()
            args.append(self.term())
        self.take(")")
        if len(args) > 2:
            raise ParseError(f"predicate {name.text!r} has {len(args)} arguments; "
                             "only unary and binary predicates are supported",
                             name.line, name.col)
        return Pred(name.text, tuple(args))

    def term(self):
        tok = self.take("ident")
        for frame in reversed(self.scope):
            if tok.text in frame:
                return frame[tok.text]
        if tok.text in self.constants:
            return Const(tok.text)
        raise UnboundVariableError(
            f"unbound variable {tok.text!r} at line {tok.line}, column {tok.col}")


def parse_formula(text: str, constants: Iterable[str] = ()) -> Formula:
    """Parse ``text``; identifiers in ``constants`` may appear free.

    Bound variables are renamed apart (``x``, ``x'1``, ...) so that no two
    quantifiers in the result bind the same name.
    """
    f = _Parser(text, frozenset(constants)).parse()
    arities([f])
    return f
