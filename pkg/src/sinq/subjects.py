"""Host-side helpers for subject program sources and input literals.

The engine needs just enough insight into subject sources to check entry
points and parameter lists, derive entry points for dataset rows, and
render candidate inputs as source literals. Actual normalization and
execution stay in the subject harness; nothing here runs subject code.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass
from pathlib import Path


class SubjectSourceError(ValueError):
    """Subject source cannot be inspected (syntax error, no functions)."""


class LiteralError(ValueError):
    """A value or literal text falls outside the supported input kinds."""


@dataclass(frozen=True)
class FunctionSignature:
    """Name, ordered parameter names, and source-text annotations of one
    top-level function."""

    name: str
    parameters: tuple[str, ...]
    annotations: dict[str, str]
    has_variadic: bool


def top_level_functions(source: str) -> list[FunctionSignature]:
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        raise SubjectSourceError(f"syntax error: {exc.msg} (line {exc.lineno})") from exc
    signatures = []
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            args = node.args
            named = [*args.posonlyargs, *args.args, *args.kwonlyargs]
            annotations = {
                a.arg: ast.unparse(a.annotation) for a in named if a.annotation is not None
            }
            signatures.append(
                FunctionSignature(
                    name=node.name,
                    parameters=tuple(a.arg for a in named),
                    annotations=annotations,
                    has_variadic=args.vararg is not None or args.kwarg is not None,
                )
            )
    return signatures


def entry_signature(source: str, entry_point: str) -> FunctionSignature | None:
    for sig in top_level_functions(source):
        if sig.name == entry_point:
            return sig
    return None


def last_top_level_function(source: str) -> str:
    """Entry point for unlabeled dataset rows: the last function defined at
    top level."""
    signatures = top_level_functions(source)
    if not signatures:
        raise SubjectSourceError("source defines no top-level function")
    return signatures[-1].name


# ---------------------------------------------------------------------------
# Input literal values. Supported kinds: int, finite float, str, bool, None,
# and lists/dicts of those; exactly what both a source literal and strict
# JSON can carry.
# ---------------------------------------------------------------------------


def check_literal_value(value: object) -> None:
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise LiteralError("non-finite floats are not valid input values")
        return
    if isinstance(value, list):
        for item in value:
            check_literal_value(item)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise LiteralError(f"mapping key {key!r} is not a string")
            check_literal_value(item)
        return
    raise LiteralError(f"unsupported input value of type {type(value).__name__}")


def render_literal(value: object) -> str:
    """Render a supported value as subject-language literal text."""
    check_literal_value(value)
    return repr(value)


def render_bindings_literal(bindings: dict[str, object]) -> str:
    """Render bindings as the dictionary literal the harness executes."""
    for key in bindings:
        if not isinstance(key, str) or not key.isidentifier():
            raise LiteralError(f"binding key {key!r} is not a valid identifier")
    body = ", ".join(f"{key!r}: {render_literal(value)}" for key, value in bindings.items())
    return "{" + body + "}"


def _eval_literal_node(node: ast.expr) -> object:
    if isinstance(node, ast.Constant):
        value = node.value
        if value is None or isinstance(value, (bool, int, str)):
            return value
        if isinstance(value, float):
            if not math.isfinite(value):
                raise LiteralError("non-finite floats are not valid input values")
            return value
        raise LiteralError(f"unsupported literal constant {value!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        operand = _eval_literal_node(node.operand)
        if isinstance(operand, bool) or not isinstance(operand, (int, float)):
            raise LiteralError("unary +/- applies to numbers only")
        return -operand if isinstance(node.op, ast.USub) else +operand
    if isinstance(node, ast.List):
        return [_eval_literal_node(item) for item in node.elts]
    if isinstance(node, ast.Dict):
        result = {}
        for key_node, value_node in zip(node.keys, node.values):
            if key_node is None:
                raise LiteralError("dict unpacking is not a literal")
            key = _eval_literal_node(key_node)
            if not isinstance(key, str):
                raise LiteralError(f"mapping key {key!r} is not a string")
            result[key] = _eval_literal_node(value_node)
        return result
    raise LiteralError(f"not a literal expression: {ast.dump(node) if node else node}")


def parse_bindings_literal(text: str) -> dict[str, object]:
    """Evaluate a bindings literal with literal-only semantics.

    Accepts a single dictionary literal whose keys are strings that are
    valid identifiers; no names, calls, or comprehensions. Mirrors the
    harness-side validation so scripted runs need no worker process.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise LiteralError(f"not parseable as a literal: {exc.msg}") from exc
    if not isinstance(tree.body, ast.Dict):
        raise LiteralError("input must be a single dictionary literal")
    bindings = _eval_literal_node(tree.body)
    assert isinstance(bindings, dict)
    for key in bindings:
        if not key.isidentifier():
            raise LiteralError(f"binding key {key!r} is not a valid identifier")
    return bindings


# ---------------------------------------------------------------------------
# Source dataset rows ({task_id, code, entry_point} JSONL).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRow:
    task_id: str
    code: str
    entry_point: str


def load_dataset(path: Path | str) -> list[DatasetRow]:
    """Load a JSONL program dataset.

    Rows carry {task_id, code} and optionally entry_point; when absent the
    entry point is the last top-level function in the code, which matches
    how exercise datasets like MBPP are laid out (helpers first, the task
    function last).
    """
    rows = []
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                task_id = str(data["task_id"])
                code = data["code"]
                entry_point = data.get("entry_point") or last_top_level_function(code)
            except (json.JSONDecodeError, KeyError, SubjectSourceError) as exc:
                raise SubjectSourceError(f"{path}:{lineno}: {exc}") from exc
            rows.append(DatasetRow(task_id=task_id, code=code, entry_point=entry_point))
    return rows
