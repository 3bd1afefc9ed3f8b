"""Closed-form scalar expressions over chart coordinates.

Accepted: numeric literals, ``pi``, coordinate names, ``+ - * /``, unary
minus, integer powers (``**`` or ``^``) and the functions ``sin``, ``cos``,
``exp``.  Expressions are compiled to closures that evaluate Taylor jets,
so every accepted expression is differentiable to any order.
"""

import ast
import math

import numpy as np

from . import jets
from .errors import ConfigError

FUNCTIONS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp}
CONSTANTS = {"pi": math.pi}


class Expression:
    """A parsed expression bound to an ordered tuple of coordinate names."""

    def __init__(self, source, coords):
        self.source = source.strip()
        self.coords = tuple(coords)
        # '^' binds like '**' here, not like Python's xor
        text, self._colmap = _caret_to_pow(self.source)
        try:
            tree = _parse(text)
            self._eval = _compile(tree.body, self.coords)
        except ConfigError as exc:
            if exc.column is not None and 0 < exc.column <= len(self._colmap):
                exc = ConfigError(exc.message, exc.line, self._colmap[exc.column - 1], exc.field)
            raise exc from None
        self.is_constant = not any(
            isinstance(node, ast.Name) and node.id in self.coords
            for node in ast.walk(tree))

    def jet(self, points, order):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        variables = [jets.Jet.variable(points, i, order) for i in range(points.shape[1])]
        out = self._eval(variables, points.shape[0], points.shape[1], order)
        if not isinstance(out, jets.Jet):
            out = jets.Jet.constant(np.full(points.shape[0], float(out)),
                                    points.shape[1], order, batch=points.shape[0])
        return out

    def __call__(self, points):
        return self.jet(points, 0).value

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and (self.source, self.coords) == (
            other.source, other.coords)

    def __hash__(self):
        return hash((self.source, self.coords))


def _caret_to_pow(source):
    """Replace ``^`` by ``**``; return the new text and new-to-old 1-based columns."""
    out, cols = [], []
    for i, ch in enumerate(source):
        if ch == "^":
            out.append("**")
            cols.extend([i + 1, i + 1])
        else:
            out.append(ch)
            cols.append(i + 1)
    cols.append(len(source) + 1)
    return "".join(out), cols


def _parse(source):
    try:
        return ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}",
                          line=exc.lineno, column=exc.offset) from None


def _fail(node, message):
    raise ConfigError(message, line=getattr(node, "lineno", None),
                      column=getattr(node, "col_offset", -1) + 1)


def _integer_exponent(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, int) \
            and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _integer_exponent(node.operand)
        return -inner if isinstance(node.op, ast.USub) else inner
    _fail(node, "exponents must be integer literals")


def _compile(node, coords):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            _fail(node, f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda v, p, n, k: value

    if isinstance(node, ast.Name):
        if node.id in coords:
            axis = coords.index(node.id)
            return lambda v, p, n, k: v[axis]
        if node.id in CONSTANTS:
            value = CONSTANTS[node.id]
            return lambda v, p, n, k: value
        _fail(node, f"unknown name {node.id!r} (coordinates are {', '.join(coords)})")

    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, coords)
        if isinstance(node.op, ast.USub):
            return lambda v, p, n, k: -inner(v, p, n, k)
        return inner

    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            base = _compile(node.left, coords)
            e = _integer_exponent(node.right)

            def pw(v, p, n, k):
                b = base(v, p, n, k)
                return b ** e if isinstance(b, jets.Jet) else float(b) ** e
            return pw
        left, right = _compile(node.left, coords), _compile(node.right, coords)
        op = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
              ast.Mult: lambda a, b: a * b, ast.Div: _divide}.get(type(node.op))
        if op is None:
            _fail(node, f"unsupported operator {type(node.op).__name__}")
        return lambda v, p, n, k: op(left(v, p, n, k), right(v, p, n, k))

    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            _fail(node, "only sin, cos and exp may be called")
        if len(node.args) != 1 or node.keywords:
            _fail(node, f"{node.func.id} takes exactly one argument")
        fn = FUNCTIONS[node.func.id]
        scalar = getattr(math, node.func.id)
        arg = _compile(node.args[0], coords)

        def call(v, p, n, k):
            a = arg(v, p, n, k)
            return fn(a) if isinstance(a, jets.Jet) else scalar(a)
        return call

    _fail(node, f"unsupported syntax {type(node).__name__}")


def _divide(a, b):
    if not isinstance(b, jets.Jet) and b == 0:
        raise ZeroDivisionError("division by a zero literal")
    return a / b
