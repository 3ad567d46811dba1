"""Evaluation and forward-mode differentiation of expression trees.

Each tree is compiled once into straight-line Python over float locals:
one value per node plus one tangent per parameter the node depends on.
Tangents a subtree provably cannot carry are never materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import DomainError, InvalidInputError
from .nodes import Binary, Call2, Const, Unary, Var, children, max_var_index


@dataclass(frozen=True)
class DualValue:
    value: float
    tangents: np.ndarray


def _pow(a, b):
    return math.pow(a, b)


def _sign(a):
    return 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)


class _Raise:
    """Builds ``raise`` statements that point back at the offending node."""

    def __init__(self):
        self.nodes = []

    def __call__(self, node, msg):
        self.nodes.append(node)
        return f"raise _DomainError({msg!r}, node=_nodes[{len(self.nodes) - 1}])"


def _postorder(tree):
    out = []
    stack = [(tree, False)]
    while stack:
        node, done = stack.pop()
        if done:
            out.append(node)
            continue
        stack.append((node, True))
        for ch in reversed(children(node)):
            stack.append((ch, False))
    return out


def _codegen(tree, m, with_tangents):
    nodes = _postorder(tree)
    slot = {}
    deps = {}
    const_valued = {}
    lines = []
    raise_ = _Raise()

    def emit(s):
        lines.append("    " + s)

    def t(k, i):
        return f"t{k}_{i}" if i in deps[k] else "0.0"

    for k, node in enumerate(nodes):
        if id(node) in slot:
            continue
        v = f"v{k}"
        if isinstance(node, Const):
            emit(f"{v} = {float(node.value)!r}")
            deps[k] = frozenset()
        elif isinstance(node, Var):
            emit(f"{v} = theta[{node.index - 1}]")
            deps[k] = frozenset([node.index - 1])
            if with_tangents:
                emit(f"t{k}_{node.index - 1} = 1.0")
        elif isinstance(node, Unary):
            a = slot[id(node.arg)]
            va = f"v{a}"
            deps[k] = deps[a]
            op = node.op
            if op == "neg":
                emit(f"{v} = -{va}")
                tan = "-{}"
            elif op == "log":
                emit(f"if not {va} > 0.0: " + raise_(node, "log of nonpositive argument"))
                emit(f"{v} = _log({va})")
                tan = "{} / " + va
            elif op == "exp":
                emit(f"{v} = _exp({va})")
                tan = "{} * " + v
            elif op == "tanh":
                emit(f"{v} = _tanh({va})")
                tan = f"(1.0 - {v} * {v}) * {{}}"
            elif op == "abs":
                emit(f"{v} = abs({va})")
                if with_tangents and deps[k]:
                    emit(f"s{k} = _sign({va})")
                tan = f"s{k} * {{}}"
            elif op == "sqrt":
                emit(f"if {va} < 0.0: " + raise_(node, "sqrt of negative argument"))
                emit(f"{v} = _sqrt({va})")
                if with_tangents and deps[k]:
                    emit(f"if {v} == 0.0: " + raise_(node, "sqrt is not differentiable at 0"))
                tan = "{} / (2.0 * " + v + ")"
            else:
                raise InvalidInputError(f"unknown unary op {op!r}")
            if with_tangents:
                for i in sorted(deps[k]):
                    emit(f"t{k}_{i} = " + tan.format(t(a, i)))
        elif isinstance(node, Binary):
            a, b = slot[id(node.left)], slot[id(node.right)]
            va, vb = f"v{a}", f"v{b}"
            deps[k] = deps[a] | deps[b]
            op = node.op
            if op == "add":
                emit(f"{v} = {va} + {vb}")
                tans = {i: f"{t(a, i)} + {t(b, i)}" for i in deps[k]}
            elif op == "sub":
                emit(f"{v} = {va} - {vb}")
                tans = {i: f"{t(a, i)} - {t(b, i)}" for i in deps[k]}
            elif op == "mul":
                emit(f"{v} = {va} * {vb}")
                tans = {i: f"{t(a, i)} * {vb} + {va} * {t(b, i)}" for i in deps[k]}
            elif op == "div":
                emit(f"if {vb} == 0.0: " + raise_(node, "division by zero"))
                emit(f"{v} = {va} / {vb}")
                tans = {i: f"({t(a, i)} - {v} * {t(b, i)}) / {vb}" for i in deps[k]}
            elif op == "pow" and isinstance(node.right, Const) and float(node.right.value) == 2.0:
                # squaring is exact as a product; keep math.pow's overflow error
                emit(f"{v} = {va} * {va}")
                emit(f"if {v} == _inf and _isfinite({va}): raise OverflowError('math range error')")
                tans = {i: f"2.0 * {va} * {t(a, i)}" for i in deps[k]}
            elif op == "pow":
                emit(f"try: {v} = _pow({va}, {vb})")
                emit("except (ValueError, ZeroDivisionError): " + raise_(node, "pow outside its domain"))
                tans = {}
                if with_tangents and deps[k]:
                    if deps[a]:
                        emit(f"if {va} == 0.0 and {vb} < 1.0: " + raise_(node, "pow is not differentiable here"))
                        emit(f"p{k} = {vb} * _pow({va}, {vb} - 1.0) if {va} != 0.0 else ({vb} if {vb} == 1.0 else 0.0)")
                    if deps[b]:
                        emit(f"if not {va} > 0.0: " + raise_(node, "variable exponent needs a positive base"))
                        emit(f"l{k} = {v} * _log({va})")
                    for i in deps[k]:
                        parts = []
                        if i in deps[a]:
                            parts.append(f"p{k} * {t(a, i)}")
                        if i in deps[b]:
                            parts.append(f"l{k} * {t(b, i)}")
                        tans[i] = " + ".join(parts)
            else:
                raise InvalidInputError(f"unknown binary op {op!r}")
            if with_tangents:
                for i in sorted(deps[k]):
                    emit(f"t{k}_{i} = {tans[i]}")
        elif isinstance(node, Call2):
            a, b = slot[id(node.a)], slot[id(node.b)]
            va, vb = f"v{a}", f"v{b}"
            deps[k] = deps[a] | deps[b]
            # ties go to the first argument
            cmp = ">=" if node.op == "max" else "<="
            if with_tangents and deps[k]:
                emit(f"if {va} {cmp} {vb}:")
                emit(f"    {v} = {va}")
                for i in sorted(deps[k]):
                    emit(f"    t{k}_{i} = {t(a, i)}")
                emit("else:")
                emit(f"    {v} = {vb}")
                for i in sorted(deps[k]):
                    emit(f"    t{k}_{i} = {t(b, i)}")
            else:
                emit(f"{v} = {va} if {va} {cmp} {vb} else {vb}")
        else:
            raise TypeError(f"not an expression node: {node!r}")
        slot[id(node)] = k

    root = slot[id(tree)]
    if with_tangents:
        tangents = ", ".join(t(root, i) for i in range(m))
        emit(f"return v{root}, ({tangents}{',' if m == 1 else ''})")
    else:
        emit(f"return v{root}")
    src = "def _f(theta):\n" + "\n".join(lines) + "\n"
    namespace = {
        "_log": math.log, "_exp": math.exp, "_tanh": math.tanh, "_sqrt": math.sqrt,
        "_pow": _pow, "_inf": math.inf, "_isfinite": math.isfinite, "_sign": _sign, "_DomainError": DomainError, "_nodes": raise_.nodes,
    }
    exec(compile(src, "<expression>", "exec"), namespace)
    return namespace["_f"]


@lru_cache(maxsize=1024)
def compile_value(tree):
    """Compiled ``theta -> value`` for ``tree`` (cached per tree)."""
    return _wrap(_codegen(tree, max_var_index(tree), False))


@lru_cache(maxsize=1024)
def compile_dual(tree, m):
    """Compiled ``theta -> (value, tangents)`` with ``m`` tangents."""
    if m < max_var_index(tree):
        raise InvalidInputError(f"expression uses x{max_var_index(tree)} but only {m} parameters given")
    return _wrap(_codegen(tree, m, True))


def _wrap(fn):
    def run(theta):
        try:
            return fn(theta)
        except OverflowError as exc:
            raise DomainError(f"overflow: {exc}") from None
    return run


def _check_theta(tree, theta):
    theta = [float(x) for x in np.asarray(theta, dtype=np.float64).ravel()]
    need = max_var_index(tree)
    if need > len(theta):
        raise InvalidInputError(f"expression uses x{need} but theta has {len(theta)} entries")
    return theta


def evaluate(tree, theta) -> float:
    """Evaluate ``tree`` at ``theta`` in IEEE double arithmetic."""
    return compile_value(tree)(_check_theta(tree, theta))


def dual(tree, theta) -> DualValue:
    theta = _check_theta(tree, theta)
    value, tangents = compile_dual(tree, len(theta))(theta)
    return DualValue(value, np.array(tangents, dtype=np.float64))


def grad(tree, theta) -> np.ndarray:
    """Exact gradient of ``tree`` at ``theta`` by forward mode."""
    return dual(tree, theta).tangents
