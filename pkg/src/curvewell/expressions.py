"""Small arithmetic expression language for configs.

Expressions may use the variables declared by the caller (typically some of
x1, x2, s, n, r, t), the constants pi and e, arithmetic operators
(+, -, *, /, **), and the functions listed in :data:`FUNCTIONS`.  Everything
is evaluated with numpy, so compiled expressions broadcast over arrays.
"""

import ast

import numpy as np

from .errors import InputError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "atan": np.arctan,
    "sign": np.sign,
    "min": np.minimum,
    "max": np.maximum,
    "where": np.where,
}

CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)
_ALLOWED_CMP = (ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def _validate(node, variables):
    if isinstance(node, ast.Expression):
        _validate(node.body, variables)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _validate(node.left, variables)
        _validate(node.right, variables)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
        _validate(node.operand, variables)
    elif isinstance(node, ast.Compare):
        if len(node.ops) != 1 or not isinstance(node.ops[0], _ALLOWED_CMP):
            raise InputError("only simple comparisons are allowed in expressions")
        _validate(node.left, variables)
        _validate(node.comparators[0], variables)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise InputError(f"unknown function in expression: {ast.dump(node.func)}")
        if node.keywords:
            raise InputError("keyword arguments are not allowed in expressions")
        for arg in node.args:
            _validate(arg, variables)
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in CONSTANTS:
            raise InputError(f"unknown name in expression: {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise InputError(f"non-numeric constant in expression: {node.value!r}")
    else:
        raise InputError(f"disallowed syntax in expression: {type(node).__name__}")


def compile_expression(text, variables):
    """Compile ``text`` into a function of the named ``variables``.

    The returned callable takes the variables as positional arguments (in the
    order given) and broadcasts over numpy arrays.
    """
    variables = tuple(variables)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InputError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    _validate(tree, set(variables))
    code = compile(tree, "<expression>", "eval")
    namespace = {**FUNCTIONS, **CONSTANTS, "__builtins__": {}}

    def evaluate(*args):
        if len(args) != len(variables):
            raise TypeError(f"expression expects {len(variables)} arguments")
        args = tuple(np.asarray(a, dtype=float) for a in args)
        result = np.asarray(eval(code, namespace, dict(zip(variables, args))),
                            dtype=float)
        if args:
            # constants like "0" must still broadcast to the argument shape
            shape = np.broadcast_shapes(*(a.shape for a in args))
            if result.shape != shape:
                result = np.broadcast_to(result, shape).copy()
        return result

    evaluate.expression = text
    evaluate.variables = variables
    return evaluate


def evaluate_scalar(text):
    """Evaluate a constant expression (used for numeric config values)."""
    fn = compile_expression(text, ())
    return float(fn())
