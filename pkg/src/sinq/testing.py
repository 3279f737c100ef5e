"""In-process executor double for scripted, harness-free runs.

The mock applies the exact same episode logic (shared limits, stability
re-runs) as the real executor; only the three primitive operations are
replaced: normalization defaults to identity, input validation reuses the
host-side literal parser, and outcomes come from a caller-supplied table.
"""

from __future__ import annotations

import ast
from typing import Callable

from .executor import ExecutorConfig, NormalizationError, SubjectExecutor
from .model import ExecutionOutcome, InputExample, SubjectProgram
from .subjects import LiteralError, parse_bindings_literal
from .executor import InputValidationError

OutcomeFn = Callable[[SubjectProgram, InputExample, float], ExecutionOutcome]


def ast_normalize(source: str) -> str:
    """Parse/unparse normalization for fixtures; raises NormalizationError
    like the real executor would."""
    try:
        return ast.unparse(ast.parse(source))
    except SyntaxError as exc:
        raise NormalizationError(f"syntax error: {exc.msg} (line {exc.lineno})") from exc


class MockExecutor(SubjectExecutor):
    def __init__(
        self,
        outcome_fn: OutcomeFn,
        config: ExecutorConfig | None = None,
        normalize_fn: Callable[[str], str] = ast_normalize,
    ):
        super().__init__(config or ExecutorConfig())
        self._outcome_fn = outcome_fn
        self._normalize_fn = normalize_fn

    def normalize(self, source: str) -> str:
        return self._normalize_fn(source)

    def validate_input(self, bindings_literal: str) -> InputExample:
        try:
            return InputExample(bindings=parse_bindings_literal(bindings_literal))
        except LiteralError as exc:
            raise InputValidationError(str(exc)) from exc

    def execute(self, program: SubjectProgram, input_example: InputExample, time_limit: float) -> ExecutionOutcome:
        return self._outcome_fn(program, input_example, time_limit)


def outcome_table(
    entries: dict[tuple[str, str], ExecutionOutcome],
    default: ExecutionOutcome | None = None,
) -> OutcomeFn:
    """Outcome function keyed by (entry_point source, bindings literal).

    Keys use the canonical bindings rendering, so table construction and
    lookup agree byte-for-byte.
    """
    from .subjects import render_bindings_literal

    def fn(program: SubjectProgram, input_example: InputExample, time_limit: float) -> ExecutionOutcome:
        key = (program.source_code, render_bindings_literal(input_example.bindings))
        if key in entries:
            return entries[key]
        if default is not None:
            return default
        raise KeyError(f"no scripted outcome for {program.entry_point} on {key[1]}")

    return fn
