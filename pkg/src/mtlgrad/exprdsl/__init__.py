"""A small language for task losses, with exact forward-mode gradients."""

from .forward import DualValue, compile_dual, compile_value, dual, evaluate, grad
from .nodes import Binary, Call2, Const, Unary, Var, max_var_index, to_text
from .parser import ParseError, parse

__all__ = [
    "Binary", "Call2", "Const", "DualValue", "ParseError", "Unary", "Var",
    "compile_dual", "compile_value", "dual", "evaluate", "grad",
    "max_var_index", "parse", "to_text",
]
