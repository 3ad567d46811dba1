"""Pratt parser for the loss-expression grammar.

Binding powers, loosest first: ``+ -`` (left), ``* /`` (left), unary
minus, ``^`` (right). So ``-x1^2`` is ``-(x1^2)`` and ``2^3^2`` is
``2^(3^2)``. ``**`` is accepted as a synonym for ``^``.
"""

from __future__ import annotations

import re

from ..errors import InvalidInputError
from .nodes import NARY2_FUNCS, UNARY_FUNCS, Binary, Call2, Const, Unary, Var

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^(),])
    """,
    re.VERBOSE,
)
_VAR = re.compile(r"x([1-9]\d*)")

_INFIX = {"+": (10, "add"), "-": (10, "sub"), "*": (20, "mul"), "/": (20, "div"), "^": (40, "pow"), "**": (40, "pow")}
_PREFIX_NEG = 30


class ParseError(InvalidInputError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, text, pos):
        self.offset = len(text[:pos].encode("utf-8"))
        super().__init__(f"{message} at byte {self.offset}")


def _tokenize(text):
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            yield kind, m.group(), pos
        pos = m.end()
    yield "end", "", len(text)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, tok, pos = self.advance()
        if tok != value or kind == "end":
            found = "end of input" if kind == "end" else repr(tok)
            raise ParseError(f"expected {value!r}, found {found}", self.text, pos)

    def expression(self, rbp=0):
        left = self.prefix()
        while True:
            kind, tok, _ = self.peek()
            if kind != "op" or tok not in _INFIX:
                return left
            lbp, op = _INFIX[tok]
            if lbp <= rbp:
                return left
            self.advance()
            # right associativity for pow: parse the right side one notch looser
            right = self.expression(lbp - 1 if op == "pow" else lbp)
            left = Binary(op, left, right)

    def prefix(self):
        kind, tok, pos = self.advance()
        if kind == "num":
            return Const(float(tok))
        if kind == "op" and tok == "-":
            return Unary("neg", self.expression(_PREFIX_NEG))
        if kind == "op" and tok == "+":
            return self.expression(_PREFIX_NEG)
        if kind == "op" and tok == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if kind == "name":
            return self.name(tok, pos)
        found = "end of input" if kind == "end" else repr(tok)
        raise ParseError(f"unexpected {found}", self.text, pos)

    def name(self, tok, pos):
        m = _VAR.fullmatch(tok)
        if m:
            return Var(int(m.group(1)))
        if tok in UNARY_FUNCS or tok in NARY2_FUNCS:
            args = self.call_args(tok, pos)
            want = 1 if tok in UNARY_FUNCS else 2
            if len(args) != want:
                raise ParseError(f"{tok}() takes {want} argument(s), got {len(args)}", self.text, pos)
            return Unary(tok, args[0]) if want == 1 else Call2(tok, args[0], args[1])
        raise ParseError(f"unknown identifier {tok!r}", self.text, pos)

    def call_args(self, fname, pos):
        kind, tok, p = self.peek()
        if tok != "(":
            raise ParseError(f"expected '(' after {fname}", self.text, p)
        self.advance()
        args = [self.expression()]
        while self.peek()[1] == ",":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        return args


def parse(text: str):
    """Parse expression text into an AST."""
    if not text or not text.strip():
        raise ParseError("empty expression", text or "", 0)
    p = _Parser(text)
    tree = p.expression()
    kind, tok, pos = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected {tok!r}", text, pos)
    return tree
