"""Domain model for the semantic inequivalence game.

Two subject programs are inequivalent when some input makes them halt with
different values, raise different exception types, or differ in halting
behaviour (approximated by a TIMEOUT outcome under a wall-clock limit).
This module holds the shared value types, the outcome-equality algebra, and
the difficulty arithmetic. Every type here is immutable after construction
and safe to share between concurrent tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Literal, Union

#: Marker used where a concrete 0..10 target difficulty is not requested.
ANY_DIFFICULTY: Literal["Any"] = "Any"

TargetDifficulty = Union[int, Literal["Any"]]


class OriginKind(Enum):
    DATASET = "dataset"
    GENERATED = "generated"


class OutcomeKind(Enum):
    VALUE = "VALUE"
    EXCEPTION = "EXCEPTION"
    TIMEOUT = "TIMEOUT"


class Winner(Enum):
    ALICE = "ALICE"
    BOB = "BOB"


class Role(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ProgramOrigin:
    """Where a subject program came from: a dataset row or an agent."""

    kind: OriginKind
    source_id: str


@dataclass(frozen=True)
class SubjectProgram:
    """A single-file subject program plus the name of its entry function.

    ``source_code`` is expected to be normalized (comments stripped,
    formatting canonicalized) before the program takes part in a game;
    normalization itself is the subject harness's job.
    """

    source_code: str
    entry_point: str
    origin: ProgramOrigin

    def __post_init__(self) -> None:
        if not self.source_code.strip():
            raise ValueError("subject program source must be non-empty")
        if not self.entry_point.isidentifier():
            raise ValueError(f"entry point {self.entry_point!r} is not an identifier")


@dataclass(frozen=True)
class InputExample:
    """Named argument bindings for one call of an entry point.

    Keys are parameter names (valid identifiers); values are restricted to
    what both a subject-language literal and strict JSON can express:
    int, finite float, str, bool, None, and lists/dicts thereof.
    """

    bindings: dict[str, object]

    def __post_init__(self) -> None:
        for key in self.bindings:
            if not isinstance(key, str) or not key.isidentifier():
                raise ValueError(f"binding key {key!r} is not a valid identifier")


@dataclass(frozen=True)
class ExecutionOutcome:
    """Result of running an entry point once: a value, an exception, or TIMEOUT.

    ``value_repr`` holds the canonical serialized return value and is present
    exactly when kind is VALUE; ``exception_type`` is present exactly when
    kind is EXCEPTION. ``exception_message`` is informational only and never
    takes part in outcome comparison.
    """

    kind: OutcomeKind
    value_repr: str | None = None
    exception_type: str | None = None
    exception_message: str = ""
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.kind is OutcomeKind.VALUE:
            if self.value_repr is None or self.exception_type is not None:
                raise ValueError("VALUE outcome carries value_repr and no exception_type")
        elif self.kind is OutcomeKind.EXCEPTION:
            if self.exception_type is None or self.value_repr is not None:
                raise ValueError("EXCEPTION outcome carries exception_type and no value_repr")
        else:
            if self.value_repr is not None or self.exception_type is not None:
                raise ValueError("TIMEOUT outcome carries neither value nor exception")

    @staticmethod
    def value(value_repr: str, wall_time: float = 0.0) -> "ExecutionOutcome":
        return ExecutionOutcome(OutcomeKind.VALUE, value_repr=value_repr, wall_time=wall_time)

    @staticmethod
    def exception(exception_type: str, message: str = "", wall_time: float = 0.0) -> "ExecutionOutcome":
        return ExecutionOutcome(
            OutcomeKind.EXCEPTION,
            exception_type=exception_type,
            exception_message=message,
            wall_time=wall_time,
        )

    @staticmethod
    def timeout(time_limit: float) -> "ExecutionOutcome":
        return ExecutionOutcome(OutcomeKind.TIMEOUT, wall_time=time_limit)


def canonical_equal(a: ExecutionOutcome, b: ExecutionOutcome) -> bool:
    """Outcome equality as the game defines it.

    Two outcomes are equal iff they are both VALUE with identical canonical
    serializations, both EXCEPTION with identical exception type names, or
    both TIMEOUT. Exception messages are never compared: they routinely embed
    addresses and line numbers that would fabricate divergences.
    """
    if a.kind is not b.kind:
        return False
    if a.kind is OutcomeKind.VALUE:
        return a.value_repr == b.value_repr
    if a.kind is OutcomeKind.EXCEPTION:
        return a.exception_type == b.exception_type
    return True


@dataclass(frozen=True)
class DivergenceVerdict:
    """Outcome of comparing P and Q on one input under a shared time limit.

    ``outcome_p``/``outcome_q`` are the outcomes of the comparison episode
    that decided the verdict, so ``divergent`` always equals
    ``not canonical_equal(outcome_p, outcome_q)``. ``stability_confirmed``
    is true only for divergences that held across every stability re-run.
    ``episodes`` counts comparison episodes run; a non-divergent verdict
    with episodes > 1 means an initial divergence failed a stability re-run.
    """

    divergent: bool
    outcome_p: ExecutionOutcome
    outcome_q: ExecutionOutcome
    time_limit: float
    stability_confirmed: bool
    episodes: int = 1

    def __post_init__(self) -> None:
        if self.divergent != (not canonical_equal(self.outcome_p, self.outcome_q)):
            raise ValueError("divergent flag must match canonical_equal on the stored outcomes")


def difficulty_fraction(n_correct: int, n_samples: int) -> Fraction:
    """Difficulty as the exact rational 10 * (1 - n_correct / n_samples)."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if not 0 <= n_correct <= n_samples:
        raise ValueError(f"n_correct {n_correct} outside [0, {n_samples}]")
    return Fraction(10 * (n_samples - n_correct), n_samples)


def difficulty(n_correct: int, n_samples: int) -> float:
    """Instance difficulty: 10 * (1 - n_correct / n_samples), in [0, 10].

    An instance the evaluator solves 40% of the time has difficulty 6.
    The float is derived from the exact rational so repeated re-estimation
    never accumulates drift.
    """
    return float(difficulty_fraction(n_correct, n_samples))


def round_difficulty(d: float) -> int:
    """Round a difficulty to the nearest integer; ties round away from zero.

    The tie rule is fixed here (7.5 -> 8) so prompt rendering and dataset
    construction agree bit-for-bit across the codebase.
    """
    if isinstance(d, float) and math.isnan(d):
        raise ValueError("difficulty is NaN")
    if not 0 <= d <= 10:
        raise ValueError(f"difficulty {d} outside [0, 10]")
    exact = Fraction(d)
    rounded = math.floor(exact + Fraction(1, 2))
    return int(rounded)


@dataclass(frozen=True)
class DifficultyEstimate:
    """Evaluator sample counts and the difficulty they imply.

    The (n_correct, n_samples) pair is the authoritative exact value;
    ``difficulty`` is derived. ``reliable`` is false when fewer than half of
    the requested evaluation samples could be scored.
    """

    n_samples: int
    n_correct: int
    difficulty: float
    reliable: bool = True

    def __post_init__(self) -> None:
        expected = difficulty(self.n_correct, self.n_samples)
        if self.difficulty != expected:
            raise ValueError(f"difficulty {self.difficulty} != 10*(1 - {self.n_correct}/{self.n_samples})")

    @staticmethod
    def from_counts(n_correct: int, n_samples: int, reliable: bool = True) -> "DifficultyEstimate":
        return DifficultyEstimate(
            n_samples=n_samples,
            n_correct=n_correct,
            difficulty=difficulty(n_correct, n_samples),
            reliable=reliable,
        )

    @property
    def exact(self) -> Fraction:
        return difficulty_fraction(self.n_correct, self.n_samples)


@dataclass(frozen=True)
class ChallengeInstance:
    """A verified (P, Q, diverging input) triple.

    Only verified instances exist: construction rejects a non-divergent
    verdict, so nothing unverified can ever reach the record store.
    """

    program_p: SubjectProgram
    program_q: SubjectProgram
    alice_input: InputExample
    alice_transcript_id: str
    verdict: DivergenceVerdict
    target_difficulty: TargetDifficulty
    difficulty: DifficultyEstimate | None = None

    def __post_init__(self) -> None:
        if self.program_p.entry_point != self.program_q.entry_point:
            raise ValueError("P and Q must share an entry point name")
        if not self.verdict.divergent:
            raise ValueError("only divergent instances may become ChallengeInstance")
        if self.target_difficulty != ANY_DIFFICULTY:
            if not isinstance(self.target_difficulty, int) or not 0 <= self.target_difficulty <= 10:
                raise ValueError(f"target difficulty {self.target_difficulty!r} not in 0..10 or 'Any'")

    def with_difficulty(self, estimate: DifficultyEstimate) -> "ChallengeInstance":
        return ChallengeInstance(
            program_p=self.program_p,
            program_q=self.program_q,
            alice_input=self.alice_input,
            alice_transcript_id=self.alice_transcript_id,
            verdict=self.verdict,
            target_difficulty=self.target_difficulty,
            difficulty=estimate,
        )


@dataclass(frozen=True)
class ChatMessage:
    """One chat turn. ``weight`` is the training-loss mask for assistant
    messages (1 = train on it, 0 = context only) and None elsewhere."""

    role: Role
    content: str
    weight: int | None = None

    def __post_init__(self) -> None:
        if self.role is Role.ASSISTANT:
            if self.weight not in (0, 1):
                raise ValueError("assistant messages carry weight 0 or 1")
        elif self.weight is not None:
            raise ValueError("only assistant messages carry a weight")


#: Dataset families a ChatExample may belong to.
EXAMPLE_TAGS = frozenset({"alice-main", "difficulty-prediction", "bob-main"})


@dataclass(frozen=True)
class ChatExample:
    """An SFT example: ordered role-tagged messages with loss weights."""

    messages: tuple[ChatMessage, ...]
    tags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        unknown = self.tags - EXAMPLE_TAGS
        if unknown:
            raise ValueError(f"unknown tags: {sorted(unknown)}")
        weighted = [m for m in self.messages if m.weight == 1]
        if not weighted:
            raise ValueError("at least one message must carry weight 1")
        if "difficulty-prediction" in self.tags:
            assistants = [m for m in self.messages if m.role is Role.ASSISTANT]
            if not assistants or assistants[-1].weight != 1 or any(m.weight != 0 for m in assistants[:-1]):
                raise ValueError("difficulty-prediction weights exactly the final assistant message")
