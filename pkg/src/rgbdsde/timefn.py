"""Deterministic functions of time used for drifts, diffusions and intensities.

Config files declare these as short expressions in ``t`` (polynomials and
exponentials). Expressions are parsed with :mod:`ast` against a whitelist and
compiled once; instances pickle by their source text.
"""

from __future__ import annotations

import ast
from typing import Callable, Union

import numpy as np

_FUNCS = {"exp": np.exp, "sqrt": np.sqrt}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load, ast.Call,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


class Constant:
    """t -> value."""

    is_constant = True

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value
        return np.full(np.shape(t), self.value)

    def __repr__(self):
        return f"Constant({self.value!r})"

    def __eq__(self, other):
        return isinstance(other, Constant) and other.value == self.value

    def __hash__(self):
        return hash(("Constant", self.value))


class Expr:
    """Expression in ``t`` built from numbers, + - * / **, exp and sqrt."""

    is_constant = False

    def __init__(self, text: str):
        self.text = str(text)
        tree = ast.parse(self.text, mode="eval")
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise ValueError(f"unsupported syntax in {self.text!r}: {type(node).__name__}")
            if isinstance(node, ast.Name) and node.id != "t" and node.id not in _FUNCS:
                raise ValueError(f"unknown name {node.id!r} in {self.text!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                    raise ValueError(f"unsupported call in {self.text!r}")
        self._code = compile(tree, "<timefn>", "eval")
        self.is_constant = not any(
            isinstance(n, ast.Name) and n.id == "t" for n in ast.walk(tree)
        )

    def __call__(self, t):
        out = eval(self._code, {"__builtins__": {}, **_FUNCS}, {"t": t})
        if np.ndim(t) == 0:
            return float(out)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(t)).copy()

    def __getstate__(self):
        return {"text": self.text}

    def __setstate__(self, state):
        self.__init__(state["text"])

    def __repr__(self):
        return f"Expr({self.text!r})"


class Sum:
    """Pointwise sum of time functions (used when merging coinciding atoms)."""

    def __init__(self, *parts):
        self.parts = tuple(parts)
        self.is_constant = all(getattr(p, "is_constant", False) for p in parts)

    def __call__(self, t):
        return sum(p(t) for p in self.parts)

    def __repr__(self):
        return "Sum(" + ", ".join(map(repr, self.parts)) + ")"


TimeFunction = Union[Constant, Expr, Sum, Callable[[float], float]]


def as_timefn(value) -> TimeFunction:
    """Coerce a number, expression string or callable into a time function."""
    if isinstance(value, (Constant, Expr, Sum)):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Constant(float(value))
    if isinstance(value, str):
        fn = Expr(value)
        return Constant(fn(0.0)) if fn.is_constant else fn
    if callable(value):
        return value
    raise TypeError(f"cannot interpret {value!r} as a function of time")


def is_constant(fn) -> bool:
    return bool(getattr(fn, "is_constant", False))
