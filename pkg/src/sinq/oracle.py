"""Model-free diverging-input search over typed input spaces.

A deliberately brute-force evaluator stand-in: enumerate (or seeded-sample)
candidate inputs, probe both programs under a short fixed limit, and
re-verify the first divergence under full game limits before returning it.
Serves as a baseline evaluator, a sanity oracle for generator outputs, and
the source of derived expected values in tests.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from .executor import InputValidationError, SubjectExecutor, UnserializableResultError
from .model import (
    DivergenceVerdict,
    InputExample,
    OriginKind,
    ProgramOrigin,
    SubjectProgram,
    canonical_equal,
)
from .subjects import SubjectSourceError, entry_signature

#: Scan-phase wall-clock limit. Divergences where both programs run longer
#: than this but under the game's lower limit are a documented blind spot.
PROBE_TIME_LIMIT = 0.5

DEFAULT_BUDGET = 2000


class SpecError(ValueError):
    """An input space cannot be built for this entry point."""


def _front_load(ordered: list, interesting: list) -> list:
    """Deterministic enumeration order with interesting values first.

    Dedup keys on (type, repr) so -0.0 and 0.0, or True and 1, stay
    distinct candidates."""
    seen: set = set()
    out: list = []
    for value in interesting + ordered:
        key = (type(value).__name__, repr(value))
        if key not in seen:
            seen.add(key)
            out.append(value)
    return out


@dataclass(frozen=True)
class IntRange:
    lo: int = -8
    hi: int = 8
    extras: tuple[int, ...] = (-100, 100)

    def values(self) -> list:
        base = list(range(self.lo, self.hi + 1)) + list(self.extras)
        interesting = [v for v in (0, -1, 1, self.lo, self.hi, *self.extras) if self.lo <= v <= self.hi or v in self.extras]
        return _front_load(base, interesting)


@dataclass(frozen=True)
class FloatGrid:
    grid: tuple[float, ...] = (0.0, -0.0, 1.0, -1.0, 0.5, -2.5, 100.0)

    def values(self) -> list:
        return _front_load(list(self.grid), [0.0])


@dataclass(frozen=True)
class StringPool:
    pool: tuple[str, ...] = ("", "a", "ab", "foo", "é世", "0", " ")

    def values(self) -> list:
        return _front_load(list(self.pool), [""])


@dataclass(frozen=True)
class BoolSpec:
    def values(self) -> list:
        return [False, True]


@dataclass(frozen=True)
class ListOf:
    element: "ValueSpec"
    max_len: int = 2

    def values(self) -> list:
        element_values = self.element.values()
        out: list = [[]]
        for length in range(1, self.max_len + 1):
            out.extend([list(c) for c in itertools.product(element_values, repeat=length)])
        return out


@dataclass(frozen=True)
class MappingOf:
    key_pool: tuple[str, ...]
    value: "ValueSpec"
    max_len: int = 1

    def values(self) -> list:
        value_values = self.value.values()
        out: list = [{}]
        for length in range(1, min(self.max_len, len(self.key_pool)) + 1):
            for keys in itertools.combinations(self.key_pool, length):
                for combo in itertools.product(value_values, repeat=length):
                    out.append(dict(zip(keys, combo)))
        return out


@dataclass(frozen=True)
class NoneOr:
    inner: "ValueSpec"

    def values(self) -> list:
        return [None] + self.inner.values()


ValueSpec = IntRange | FloatGrid | StringPool | BoolSpec | ListOf | MappingOf | NoneOr


@dataclass(frozen=True)
class InputSpaceSpec:
    """Per-parameter value generators plus an evaluation budget.

    Enumeration is exhaustive in lexicographic parameter order when the
    product space fits the budget, otherwise budget-many seeded draws.
    """

    params: dict[str, ValueSpec]
    budget: int = DEFAULT_BUDGET
    seed: int = 0

    def size(self) -> int:
        total = 1
        for spec in self.params.values():
            total *= len(spec.values())
        return total

    def candidates(self) -> list[InputExample]:
        names = list(self.params)
        pools = [self.params[name].values() for name in names]
        if self.size() <= self.budget:
            combos = itertools.product(*pools)
        else:
            rng = random.Random(self.seed)
            combos = ([rng.choice(pool) for pool in pools] for _ in range(self.budget))
        out = []
        for combo in itertools.islice(combos, self.budget):
            out.append(InputExample(bindings=dict(zip(names, combo))))
        return out


_ANNOTATION_SPECS: dict[str, ValueSpec] = {
    "int": IntRange(),
    "float": FloatGrid(),
    "str": StringPool(),
    "bool": BoolSpec(),
    "list": ListOf(IntRange(-2, 2, extras=())),
    "list[int]": ListOf(IntRange(-2, 2, extras=())),
    "list[str]": ListOf(StringPool(("", "a"))),
    "dict": MappingOf(("a", "b"), IntRange(-2, 2, extras=())),
}


def _spec_for_annotation(annotation: str) -> ValueSpec | None:
    text = annotation.strip()
    if text.startswith("Optional[") and text.endswith("]"):
        inner = _spec_for_annotation(text[len("Optional[") : -1])
        return NoneOr(inner) if inner is not None else None
    if "|" in text:
        parts = [p.strip() for p in text.split("|")]
        if "None" in parts and len(parts) == 2:
            other = next(p for p in parts if p != "None")
            inner = _spec_for_annotation(other)
            return NoneOr(inner) if inner is not None else None
        return None
    return _ANNOTATION_SPECS.get(text)


def infer_input_space(
    program: SubjectProgram, budget: int = DEFAULT_BUDGET, seed: int = 0
) -> InputSpaceSpec:
    """Default input space from the entry signature.

    Unannotated parameters get the small-integer default (0 and -1 first,
    range boundaries and two large sentinels included); recognized
    annotations narrow a parameter to its own kind. Entry points taking
    only *args/**kwargs have no named parameters to bind.
    """
    signature = entry_signature(program.source_code, program.entry_point)
    if signature is None:
        raise SubjectSourceError(f"entry point {program.entry_point!r} not found")
    if not signature.parameters:
        if signature.has_variadic:
            raise SpecError("variadic-only signatures cannot be enumerated")
        return InputSpaceSpec(params={}, budget=budget, seed=seed)
    params: dict[str, ValueSpec] = {}
    for name in signature.parameters:
        spec = None
        if name in signature.annotations:
            spec = _spec_for_annotation(signature.annotations[name])
        params[name] = spec if spec is not None else IntRange()
    return InputSpaceSpec(params=params, budget=budget, seed=seed)


def _value_spec_from_dict(data: dict) -> ValueSpec:
    kind = data.get("kind")
    if kind == "int_range":
        return IntRange(
            lo=int(data.get("lo", -8)),
            hi=int(data.get("hi", 8)),
            extras=tuple(int(v) for v in data.get("extras", (-100, 100))),
        )
    if kind == "float_grid":
        return FloatGrid(grid=tuple(float(v) for v in data["values"]))
    if kind == "string_pool":
        return StringPool(pool=tuple(str(v) for v in data["values"]))
    if kind == "bool":
        return BoolSpec()
    if kind == "list_of":
        return ListOf(element=_value_spec_from_dict(data["element"]), max_len=int(data.get("max_len", 2)))
    if kind == "mapping_of":
        return MappingOf(
            key_pool=tuple(str(k) for k in data["keys"]),
            value=_value_spec_from_dict(data["value"]),
            max_len=int(data.get("max_len", 1)),
        )
    if kind == "none_or":
        return NoneOr(inner=_value_spec_from_dict(data["inner"]))
    raise SpecError(f"unknown value spec kind {kind!r}")


def space_from_dict(data: dict, budget: int = DEFAULT_BUDGET, seed: int = 0) -> InputSpaceSpec:
    """Build a space from its JSON form ({param: {kind: ..., ...}}), the
    format used by config files and the CLI --space flag."""
    params = {name: _value_spec_from_dict(spec) for name, spec in data.items()}
    return InputSpaceSpec(params=params, budget=budget, seed=seed)


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a divergence search; ``found`` is None after budget
    exhaustion. Any returned input was re-verified under full game limits."""

    found: InputExample | None
    verdict: DivergenceVerdict | None
    evaluations: int
    skipped: int

    @property
    def not_found(self) -> bool:
        return self.found is None


@dataclass
class OracleAgent:
    """The search mechanism wearing the evaluator-agent interface, for
    baseline comparisons: it answers evaluator prompts by brute-force
    search instead of sampling a model.

    The pair is recovered from the two fenced programs of the rendered
    prompt (prompt rendering is byte-stable, so this inversion is exact);
    the response is deterministic, so all n samples are identical.
    """

    executor: SubjectExecutor
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    agent_id: str = "oracle-baseline"

    def complete(self, prompt, params) -> list[str]:
        from .parser import render_bob_response

        user = prompt.messages[-1][1]
        entry_line, _, rest = user.partition("\n")
        entry_point = entry_line.removeprefix("Entry point function: ").strip()
        sources = _fenced_blocks(rest)
        if len(sources) < 2 or not entry_point.isidentifier():
            raise ValueError("prompt does not look like an evaluator prompt")
        origin = ProgramOrigin(OriginKind.GENERATED, "oracle-prompt")
        program_p = SubjectProgram(sources[0], entry_point, origin)
        program_q = SubjectProgram(sources[1], entry_point, origin)
        space = infer_input_space(program_p, budget=self.budget, seed=self.seed)
        result = search(program_p, program_q, space, self.executor)
        if result.found is None:
            text = render_bob_response("Exhausted the search budget without a witness.", True)
        else:
            from .subjects import render_bindings_literal

            text = render_bob_response(
                f"Enumerated {result.evaluations} candidate inputs.",
                False,
                render_bindings_literal(result.found.bindings),
            )
        return [text] * params.n


def _fenced_blocks(text: str) -> list[str]:
    from .parser import extract_first_code_fence

    blocks = []
    remaining = text
    while True:
        body = extract_first_code_fence(remaining)
        if body is None:
            return blocks
        blocks.append(body)
        marker = f"```python\n{body}\n```"
        index = remaining.find(marker)
        if index < 0:
            return blocks
        remaining = remaining[index + len(marker):]


def search(
    program_p: SubjectProgram,
    program_q: SubjectProgram,
    space: InputSpaceSpec,
    executor: SubjectExecutor,
    probe_limit: float = PROBE_TIME_LIMIT,
) -> SearchResult:
    """Scan the space for a diverging input.

    Candidates run under ``probe_limit``; the first probe divergence is
    confirmed with a full check_divergence (randomized limits plus
    stability re-runs) before being returned, so the result is sound.
    Candidates the harness rejects are skipped and counted.
    """
    if program_p.entry_point != program_q.entry_point:
        raise ValueError("search requires matching entry points")
    evaluations = 0
    skipped = 0
    for candidate in space.candidates():
        if evaluations >= space.budget:
            break
        evaluations += 1
        try:
            outcome_p = executor.execute(program_p, candidate, probe_limit)
            outcome_q = executor.execute(program_q, candidate, probe_limit)
        except (InputValidationError, UnserializableResultError):
            skipped += 1
            continue
        if canonical_equal(outcome_p, outcome_q):
            continue
        try:
            verdict = executor.check_divergence(program_p, program_q, candidate)
        except (InputValidationError, UnserializableResultError):
            skipped += 1
            continue
        if verdict.divergent:
            return SearchResult(found=candidate, verdict=verdict, evaluations=evaluations, skipped=skipped)
    return SearchResult(found=None, verdict=None, evaluations=evaluations, skipped=skipped)
