"""Small arithmetic expression language used by scenario files.

Expressions are parsed with :mod:`ast` and checked against a whitelist before
being compiled, so a scenario file can never execute arbitrary code.

Grammar: numbers, ``+ - * / ^`` (``**`` is accepted too), unary minus,
parentheses, the functions ``sin cos tan exp log sqrt tanh cosh sinh abs``,
the constants ``pi`` and ``e``, and the variables ``t``, ``s`` (an alias of
the time argument) and ``y_1 ... y_n`` (``y`` is accepted when n = 1).
Evaluation is vectorized: ``t`` may be an array and ``y`` an array whose last
axis is the state dimension.
"""

from __future__ import annotations

import ast
import re

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)
_STATE_VAR = re.compile(r"^y_([1-9][0-9]*)$")


class ExpressionError(ValueError):
    """Raised when an expression string is not part of the grammar."""


class Expr:
    """A compiled expression ``source`` in the variables t/s and y_i."""

    def __init__(self, source: str | int | float, dimension: int = 1):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError(f"expression must be a non-empty string, got {source!r}")
        self.source = source
        self.dimension = dimension
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self.state_indices: set[int] = set()
        self.uses_time = False
        self._check(tree.body)
        self._code = compile(tree, f"<expr {source}>", "eval")
        self.is_constant = not self.uses_time and not self.state_indices

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"unsupported literal {node.value!r} in {self.source!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if node.keywords or len(node.args) != 1:
                raise ExpressionError(f"functions take exactly one argument in {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            name = node.id
            if name in ("t", "s"):
                self.uses_time = True
            elif name in CONSTANTS:
                pass
            elif name == "y" and self.dimension == 1:
                self.state_indices.add(1)
            else:
                m = _STATE_VAR.match(name)
                if m is None:
                    raise ExpressionError(f"unknown name {name!r} in {self.source!r}")
                i = int(m.group(1))
                if i > self.dimension:
                    raise ExpressionError(
                        f"{name} exceeds dimension {self.dimension} in {self.source!r}"
                    )
                self.state_indices.add(i)
        else:
            raise ExpressionError(
                f"unsupported syntax {type(node).__name__} in {self.source!r}"
            )

    def __call__(self, t, y=None):
        env = dict(FUNCTIONS)
        env.update(CONSTANTS)
        env["t"] = env["s"] = t
        if self.state_indices:
            if y is None:
                raise ExpressionError(f"{self.source!r} needs a state argument")
            y = np.asarray(y, dtype=float)
            for i in self.state_indices:
                env[f"y_{i}"] = y[..., i - 1]
            if self.dimension == 1:
                env["y"] = y[..., 0]
        with np.errstate(all="ignore"):
            return eval(self._code, {"__builtins__": {}}, env)

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and (self.source, self.dimension) == (
            other.source,
            other.dimension,
        )

    def __hash__(self) -> int:
        return hash((self.source, self.dimension))


def batch_shape(t, y=None) -> tuple:
    """Leading (batch) shape implied by a time argument and a state array."""
    shape = np.shape(t)
    if y is not None:
        shape = np.broadcast_shapes(shape, np.shape(y)[:-1])
    return shape


def eval_vector(exprs, t, y=None) -> np.ndarray:
    """Evaluate a list of expressions as a vector with shape batch + (n,)."""
    shape = batch_shape(t, y)
    cols = [np.broadcast_to(np.asarray(e(t, y), dtype=float), shape) for e in exprs]
    return np.stack(cols, axis=-1)


def eval_matrix(rows, t, y=None) -> np.ndarray:
    """Evaluate a nested list of expressions as a matrix, shape batch + (n, n)."""
    shape = batch_shape(t, y)
    out = np.empty(shape + (len(rows), len(rows[0])))
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            out[..., i, j] = np.broadcast_to(np.asarray(e(t, y), dtype=float), shape)
    return out


def eval_scalar(expr, t) -> np.ndarray | float:
    shape = np.shape(t)
    val = np.broadcast_to(np.asarray(expr(t), dtype=float), shape)
    return float(val) if shape == () else np.array(val)
