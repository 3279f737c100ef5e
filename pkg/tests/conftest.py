"""Shared fixtures: the canonical fib program pair, scripted agents, and a
table-driven mock executor."""

from __future__ import annotations

import pytest

from sinq.executor import ExecutorConfig
from sinq.model import ExecutionOutcome, InputExample, OriginKind, ProgramOrigin, SubjectProgram
from sinq.parser import render_alice_response, render_bob_response
from sinq.testing import MockExecutor, outcome_table

# The worked example pair: P returns 0 for n <= 0, Q only for n == 0, so any
# negative n makes Q recur without a base case.
FIB_P = """def fib(n):
    if n <= 0:
        return 0
    elif n == 1:
        return 1
    return fib(n - 1) + fib(n - 2)"""

FIB_Q = """def fib(n):
    if n == 0:
        return 0
    elif n == 1:
        return 1
    return fib(n - 1) + fib(n - 2)"""

# Second variant used by scripted rounds: diverges on n = 0 (returns 1).
FIB_Q2 = """def fib(n):
    if n <= 0:
        return 1
    elif n == 1:
        return 1
    return fib(n - 1) + fib(n - 2)"""

ALICE_ANALYSIS = (
    "The original program returns 0 for every n <= 0. Tightening the base "
    "case to n == 0 leaves negative arguments recursing without a base case, "
    "so the variant raises RecursionError where the original returns 0."
)

BOB_ANALYSIS = (
    "Program 1 catches all n <= 0 while Program 2 only catches n == 0, so "
    "any negative argument diverges: Program 1 returns 0, Program 2 recurses "
    "forever."
)

ALICE_RESPONSE_EXAMPLE = render_alice_response(ALICE_ANALYSIS, FIB_Q, '{"n": -1}')
BOB_RESPONSE_EXAMPLE = render_bob_response(BOB_ANALYSIS, False, '{"n": -2}')
BOB_RESPONSE_YES = render_bob_response("They look identical to me.", True)


def program(source: str, entry_point: str = "fib", source_id: str = "fixture") -> SubjectProgram:
    return SubjectProgram(
        source_code=source,
        entry_point=entry_point,
        origin=ProgramOrigin(OriginKind.DATASET, source_id),
    )


@pytest.fixture
def fib_p() -> SubjectProgram:
    return program(FIB_P, source_id="mbpp-fib")


@pytest.fixture
def fib_q() -> SubjectProgram:
    return SubjectProgram(
        source_code=FIB_Q,
        entry_point="fib",
        origin=ProgramOrigin(OriginKind.GENERATED, "alice"),
    )


#: Scripted differential behaviour of the fixture programs on the inputs the
#: scripted agents mention, keyed by (source, bindings literal).
FIB_OUTCOMES = {
    (FIB_P, "{'n': -1}"): ExecutionOutcome.value("0", wall_time=0.01),
    (FIB_Q, "{'n': -1}"): ExecutionOutcome.exception("RecursionError", wall_time=0.05),
    (FIB_P, "{'n': -2}"): ExecutionOutcome.value("0", wall_time=0.01),
    (FIB_Q, "{'n': -2}"): ExecutionOutcome.exception("RecursionError", wall_time=0.05),
    (FIB_P, "{'n': 0}"): ExecutionOutcome.value("0", wall_time=0.01),
    (FIB_Q2, "{'n': 0}"): ExecutionOutcome.value("1", wall_time=0.01),
    (FIB_P, "{'n': -3}"): ExecutionOutcome.value("0", wall_time=0.01),
    (FIB_Q2, "{'n': -3}"): ExecutionOutcome.value("1", wall_time=0.01),
    (FIB_Q, "{'n': 0}"): ExecutionOutcome.value("0", wall_time=0.01),
    (FIB_Q2, "{'n': -1}"): ExecutionOutcome.value("1", wall_time=0.01),
}


@pytest.fixture
def mock_executor() -> MockExecutor:
    return MockExecutor(outcome_table(FIB_OUTCOMES), config=ExecutorConfig(rng_seed=7))


# ---------------------------------------------------------------------------
# Record factories shared by store/forge/eval/acceptance tests.
# ---------------------------------------------------------------------------

from sinq.gateway import AgentTranscript, SamplingParams
from sinq.model import (
    ChallengeInstance,
    DifficultyEstimate,
    DivergenceVerdict,
)
from sinq.parser import BobArtifacts
from sinq.store import BobSample, GameRecord, compute_winner, derive_record_id


def make_transcript(text: str, tid: str = "t" * 16) -> AgentTranscript:
    return AgentTranscript(
        transcript_id=tid,
        prompt_digest="d" * 64,
        response_text=text,
        agent_id="scripted",
        sampling=SamplingParams(),
    )


def make_record(
    n_correct: int = 4,
    n_samples: int = 10,
    round_label: str = "round-0",
    tid: str = "t" * 16,
    q_source: str = FIB_Q,
) -> GameRecord:
    verdict = DivergenceVerdict(
        divergent=True,
        outcome_p=ExecutionOutcome.value("0", wall_time=0.01),
        outcome_q=ExecutionOutcome.exception("RecursionError", "depth", wall_time=0.05),
        time_limit=4.25,
        stability_confirmed=True,
        episodes=2,
    )
    alice_transcript = make_transcript(ALICE_RESPONSE_EXAMPLE, tid)
    samples = tuple(
        BobSample(
            transcript=make_transcript(BOB_RESPONSE_EXAMPLE, tid=f"{tid[:6]}{i:010d}"),
            claim=BobArtifacts("a", False, '{"n": -2}'),
            verdict=verdict if i < n_correct else None,
            evaluated=True,
            correct=i < n_correct,
            note="verified diverging input" if i < n_correct else "claimed input does not diverge",
        )
        for i in range(n_samples)
    )
    instance = ChallengeInstance(
        program_p=SubjectProgram(FIB_P, "fib", ProgramOrigin(OriginKind.DATASET, f"mbpp-{tid[:6]}")),
        program_q=SubjectProgram(q_source, "fib", ProgramOrigin(OriginKind.GENERATED, tid)),
        alice_input=InputExample({"n": -1}),
        alice_transcript_id=tid,
        verdict=verdict,
        target_difficulty=10,
        difficulty=DifficultyEstimate.from_counts(n_correct, n_samples),
    )
    return GameRecord(
        record_id=derive_record_id(instance),
        round_label=round_label,
        created_at="1970-01-01T00:00:00+00:00",
        agent_versions=("alice-v1", "bob-v1"),
        instance=instance,
        alice_transcript=alice_transcript,
        bob_samples=samples,
        winner=compute_winner(samples),
    )


def synthetic_store(correct_counts: list[int], round_label: str = "round-0") -> list[GameRecord]:
    """Records with difficulties 10 * (1 - c/10) for each c, unique ids."""
    return [
        make_record(n_correct=c, round_label=round_label, tid=f"{i:016d}")
        for i, c in enumerate(correct_counts)
    ]
