"""A tiny closed-form expression grammar evaluated with numpy.

Supported: numeric literals, ``+ - * /``, unary minus, parentheses, the
functions ``sin cos exp abs min max`` and the constant ``pi``.  Variable
names are fixed per use site (coordinates ``x y x1 x2`` and time ``t``).
Anything else is rejected at parse time.
"""
import ast

import numpy as np

__all__ = ["Expression", "parse", "ExpressionError"]

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTS = {"pi": np.pi}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
}
DEFAULT_VARIABLES = ("x", "y", "x1", "x2", "t")


class ExpressionError(ValueError):
    pass


def _check(node, variables):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in variables and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, variables)
        _check(node.right, variables)
        return
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("unsupported unary operator")
        _check(node.operand, variables)
        return
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("unsupported function call")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        nargs = 2 if node.func.id in ("min", "max") else 1
        if len(node.args) != nargs:
            raise ExpressionError(f"{node.func.id} takes {nargs} argument(s)")
        for a in node.args:
            _check(a, variables)
        return
    raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    return _FUNCS[node.func.id](*(_eval(a, env) for a in node.args))


class Expression:
    """A parsed, validated expression.

    Examples
    --------
    >>> e = Expression("0.3 + 0.7*x1")
    >>> float(e(x1=1.0))
    1.0
    """

    def __init__(self, text, variables=DEFAULT_VARIABLES):
        if not isinstance(text, str):
            raise ExpressionError("expression must be a string")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        self.variables = tuple(variables)
        _check(tree, self.variables)
        self.text = text
        self._tree = tree.body
        self.names = sorted({n.id for n in ast.walk(tree)
                             if isinstance(n, ast.Name) and n.id in self.variables})

    def __call__(self, **env):
        missing = [n for n in self.names if n not in env]
        if missing:
            raise ExpressionError(f"missing value for {missing}")
        return _eval(self._tree, env)

    def at_points(self, points, t=0.0):
        """Evaluate on an ``(K, d)`` array of points, broadcasting constants."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        env = {"t": t, "x": pts[:, 0], "x1": pts[:, 0]}
        if pts.shape[1] > 1:
            env["y"] = env["x2"] = pts[:, 1]
        out = self(**env)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(pts),)).copy()

    def of_time(self, t):
        return np.asarray(self(t=np.asarray(t, dtype=float)), dtype=float)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse(text, variables=DEFAULT_VARIABLES):
    return Expression(text, variables)
