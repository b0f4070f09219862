"""Tiny arithmetic grammar for weight and boundary specifications.

Allowed: numbers, the coordinates x1..x3, the operators + - * / (and **),
and the calls abs, max, min, pow. Unknown identifiers are rejected at
parse time. Compiled expressions evaluate vectorized over coordinate
arrays of shape (..., dim).
"""

from __future__ import annotations

import ast
import functools
from typing import Callable

import numpy as np


class ExpressionError(ValueError):
    """Rejected expression: syntax error or unknown identifier/operation."""


def _vmax(*args):
    return functools.reduce(np.maximum, args)


def _vmin(*args):
    return functools.reduce(np.minimum, args)


_FUNCS = {"abs": np.abs, "max": _vmax, "min": _vmin, "pow": np.power}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARYOPS = (ast.USub, ast.UAdd)


def _validate(node: ast.AST, names: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, names)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _validate(node.left, names)
        _validate(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARYOPS):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _validate(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only abs, max, min, pow may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        for arg in node.args:
            _validate(arg, names)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            raise ExpressionError(f"unknown identifier {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"constant {node.value!r} not allowed")
    else:
        raise ExpressionError(f"syntax element {type(node).__name__} not allowed")


def parse_expression(src: str | float | int, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a grammar expression into a vectorized coordinate function."""
    if isinstance(src, (int, float)):
        value = float(src)

        def const(coords: np.ndarray) -> np.ndarray:
            return np.full(np.asarray(coords).shape[:-1], value)

        return const
    names = {f"x{i + 1}" for i in range(dim)}
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {src!r}: {exc.msg}") from exc
    _validate(tree, names)
    code = compile(tree, "<fblab-expression>", "eval")

    def fn(coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        env = {f"x{d + 1}": coords[..., d] for d in range(dim)}
        env.update(_FUNCS)
        out = eval(code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        return np.broadcast_to(np.asarray(out, dtype=float), coords.shape[:-1]).copy()

    return fn
