"""Expression tree node types and the canonical printer."""

from __future__ import annotations

from dataclasses import dataclass

UNARY_FUNCS = ("log", "exp", "tanh", "abs", "sqrt")
UNARY_OPS = ("neg",) + UNARY_FUNCS
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
NARY2_FUNCS = ("max", "min")

_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based: x1 is index 1

    @property
    def name(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call2:
    op: str  # max | min
    a: "Node"
    b: "Node"


Node = Const | Var | Unary | Binary | Call2


def children(node):
    if isinstance(node, Unary):
        return (node.arg,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    if isinstance(node, Call2):
        return (node.a, node.b)
    return ()


def max_var_index(node) -> int:
    if isinstance(node, Var):
        return node.index
    return max((max_var_index(c) for c in children(node)), default=0)


def to_text(node) -> str:
    """Print an expression so that ``parse(to_text(e)) == e``.

    Binaries and negation are fully parenthesized. Constants print with
    ``repr``; negative constants cannot be produced by the parser and have
    no round-trip guarantee.
    """
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    if isinstance(node, Binary):
        return f"({to_text(node.left)} {_SYMBOL[node.op]} {to_text(node.right)})"
    if isinstance(node, Call2):
        return f"{node.op}({to_text(node.a)}, {to_text(node.b)})"
    raise TypeError(f"not an expression node: {node!r}")
