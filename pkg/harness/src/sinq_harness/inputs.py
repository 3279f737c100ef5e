"""Input literal validation with literal-only semantics.

An input is a single dictionary literal whose keys are strings that are
valid identifiers. Values may be ints, finite floats, strings, booleans,
None, and nested lists/dicts of those; unary +/- on numbers is the only
operator. No names, calls, comprehensions, or other expressions, so
validation can never execute anything. The accepted kinds round-trip
through strict JSON, which is how canonical bindings travel back to the
host.
"""

from __future__ import annotations

import ast
import math


class InputError(ValueError):
    """The literal is not an acceptable input mapping."""


def validate_bindings_literal(text: str) -> dict[str, object]:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except (SyntaxError, ValueError) as exc:
        raise InputError(f"not parseable: {getattr(exc, 'msg', exc)}") from exc
    if not isinstance(tree.body, ast.Dict):
        raise InputError("input must be a single dictionary literal")
    bindings: dict[str, object] = {}
    for key_node, value_node in zip(tree.body.keys, tree.body.values):
        if key_node is None:
            raise InputError("dict unpacking is not a literal")
        key = _evaluate(key_node)
        if not isinstance(key, str):
            raise InputError(f"binding key {key!r} is not a string")
        if not key.isidentifier():
            raise InputError(f"binding key {key!r} is not a valid identifier")
        bindings[key] = _evaluate(value_node)
    return bindings


def _evaluate(node: ast.expr) -> object:
    if isinstance(node, ast.Constant):
        value = node.value
        if value is None or isinstance(value, (bool, int, str)):
            return value
        if isinstance(value, float):
            if not math.isfinite(value):
                raise InputError("non-finite float values are not accepted")
            return value
        raise InputError(f"unsupported constant of type {type(value).__name__}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _evaluate(node.operand)
        if isinstance(operand, bool) or not isinstance(operand, (int, float)):
            raise InputError("unary +/- applies to numbers only")
        return -operand if isinstance(node.op, ast.USub) else +operand
    if isinstance(node, ast.List):
        return [_evaluate(item) for item in node.elts]
    if isinstance(node, ast.Dict):
        result: dict[str, object] = {}
        for key_node, value_node in zip(node.keys, node.values):
            if key_node is None:
                raise InputError("dict unpacking is not a literal")
            key = _evaluate(key_node)
            if not isinstance(key, str):
                raise InputError("nested mapping keys must be strings")
            result[key] = _evaluate(value_node)
        return result
    raise InputError(f"not a literal expression: {type(node).__name__}")


def check_bindings_against_entry(
    bindings: dict[str, object], parameters: list[str], has_kwargs: bool
) -> None:
    """Strict argument check: every binding must name an entry-point
    parameter (unless the entry takes **kwargs). Missing parameters are
    left to the call itself, which raises inside the subject run."""
    if has_kwargs:
        return
    extra = [key for key in bindings if key not in parameters]
    if extra:
        raise InputError(f"bindings name parameters the entry point lacks: {extra}")
