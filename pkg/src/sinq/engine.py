"""Round logic of the inequivalence game.

One round per source program: prompt the generator with a target
difficulty, verify every returned candidate by differential execution,
score each surviving instance by sampling the evaluator, and append the
resulting records to the store. Difficulties can later be re-estimated
against a newer evaluator; superseded estimates stay in each record's
history.
"""

from __future__ import annotations

import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable

from .executor import (
    ExecutorConfig,
    ExecutorError,
    HarnessCrashError,
    InputValidationError,
    NormalizationError,
    SubjectExecutor,
    UnserializableResultError,
)
from .gateway import (
    AgentTranscript,
    Agent,
    AuthenticationError,
    GatewayError,
    SamplingParams,
    TemplateSet,
    builtin_templates,
    sample,
)
from .model import (
    ChallengeInstance,
    DifficultyEstimate,
    OriginKind,
    ProgramOrigin,
    SubjectProgram,
    TargetDifficulty,
)
from .parser import ParseError, parse_alice_response, parse_bob_response
from .store import (
    BobSample,
    GameRecord,
    RecordStore,
    TranscriptLog,
    compute_winner,
    derive_record_id,
)
from .subjects import DatasetRow, entry_signature, SubjectSourceError

logger = logging.getLogger(__name__)

Clock = Callable[[], str]


def utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class EngineError(RuntimeError):
    """Systemic failure that invalidates a whole round."""


class RejectionStage(Enum):
    PARSE = "parse"
    SYNTAX = "syntax"
    ENTRY_POINT = "entry_point"
    INPUT = "input"
    NOT_DIVERGENT = "not_divergent"
    UNSERIALIZABLE = "unserializable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class Rejection:
    """Why a generator candidate was discarded, tagged with the pipeline
    stage that rejected it."""

    stage: RejectionStage
    detail: str
    transcript_id: str


@dataclass(frozen=True)
class RoundConfig:
    """Knobs for one generation round; the defaults mirror the game's
    standard setup (target 10, 10 generator and 10 evaluator samples)."""

    target_difficulty: TargetDifficulty = 10
    bob_samples: int = 10
    alice_samples: int = 10
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    sampling: SamplingParams = field(default_factory=SamplingParams)

    def __post_init__(self) -> None:
        if self.bob_samples < 1 or self.alice_samples < 1:
            raise ValueError("bob_samples and alice_samples must be positive")


@dataclass
class RoundStats:
    """Per-round accounting. Received generator samples partition exactly
    into valid instances plus stage-tagged rejections."""

    alice_requested: int = 0
    alice_received: int = 0
    valid: int = 0
    rejections: Counter = field(default_factory=Counter)
    bob_transport_failures: int = 0

    def merge(self, other: "RoundStats") -> None:
        self.alice_requested += other.alice_requested
        self.alice_received += other.alice_received
        self.valid += other.valid
        self.rejections.update(other.rejections)
        self.bob_transport_failures += other.bob_transport_failures


def verify_alice(
    program_p: SubjectProgram,
    transcript: AgentTranscript,
    executor: SubjectExecutor,
    target_difficulty: TargetDifficulty,
) -> ChallengeInstance | Rejection:
    """Run one generator response through the verification pipeline:
    parse, normalize Q, entry-point/signature check, input validation,
    differential execution. Any stage failure yields a stage-tagged
    Rejection; success yields a verified ChallengeInstance."""

    def rejection(stage: RejectionStage, detail: str) -> Rejection:
        return Rejection(stage=stage, detail=detail, transcript_id=transcript.transcript_id)

    try:
        artifacts = parse_alice_response(transcript.response_text)
    except ParseError as exc:
        return rejection(RejectionStage.PARSE, str(exc))

    try:
        q_source = executor.normalize(artifacts.program_source)
    except NormalizationError as exc:
        return rejection(RejectionStage.SYNTAX, str(exc))

    try:
        p_sig = entry_signature(program_p.source_code, program_p.entry_point)
        q_sig = entry_signature(q_source, program_p.entry_point)
    except SubjectSourceError as exc:
        return rejection(RejectionStage.SYNTAX, str(exc))
    if p_sig is None:
        raise EngineError(
            f"source program does not define entry point {program_p.entry_point!r}"
        )
    if q_sig is None:
        return rejection(
            RejectionStage.ENTRY_POINT,
            f"generated program does not define {program_p.entry_point!r} at top level",
        )
    if q_sig.parameters != p_sig.parameters:
        return rejection(
            RejectionStage.ENTRY_POINT,
            f"entry point parameters changed: {q_sig.parameters} != {p_sig.parameters}",
        )

    try:
        input_example = executor.validate_input(artifacts.input_literal)
    except InputValidationError as exc:
        return rejection(RejectionStage.INPUT, str(exc))

    program_q = SubjectProgram(
        source_code=q_source,
        entry_point=program_p.entry_point,
        origin=ProgramOrigin(OriginKind.GENERATED, transcript.transcript_id),
    )
    try:
        verdict = executor.check_divergence(program_p, program_q, input_example)
    except UnserializableResultError as exc:
        return rejection(RejectionStage.UNSERIALIZABLE, str(exc))
    except InputValidationError as exc:
        return rejection(RejectionStage.INPUT, str(exc))

    if not verdict.divergent:
        if verdict.episodes > 1:
            return rejection(
                RejectionStage.UNSTABLE, "divergence did not survive a stability re-run"
            )
        return rejection(RejectionStage.NOT_DIVERGENT, "P(x) = Q(x) on the claimed input")

    return ChallengeInstance(
        program_p=program_p,
        program_q=program_q,
        alice_input=input_example,
        alice_transcript_id=transcript.transcript_id,
        verdict=verdict,
        target_difficulty=target_difficulty,
    )


def _score_bob_sample(
    instance: ChallengeInstance,
    transcript: AgentTranscript,
    executor: SubjectExecutor,
) -> BobSample:
    """Score one evaluator sample. A sample is correct iff it parses,
    claims inequivalence, and its own input is re-verified divergent by
    execution (it need not match the generator's input). Verification
    timeouts and failed inputs count as incorrect; only infrastructure
    failures leave a sample unevaluated."""
    try:
        claim = parse_bob_response(transcript.response_text)
    except ParseError as exc:
        return BobSample(transcript, None, None, evaluated=True, correct=False, note=f"parse: {exc}")
    if claim.claims_equivalent:
        return BobSample(
            transcript, claim, None, evaluated=True, correct=False,
            note="claimed equivalent (instances never are)",
        )
    assert claim.input_literal is not None
    try:
        input_example = executor.validate_input(claim.input_literal)
    except InputValidationError as exc:
        return BobSample(transcript, claim, None, evaluated=True, correct=False, note=f"input: {exc}")
    try:
        verdict = executor.check_divergence(instance.program_p, instance.program_q, input_example)
    except UnserializableResultError as exc:
        return BobSample(
            transcript, claim, None, evaluated=True, correct=False, note=f"unserializable: {exc}"
        )
    except InputValidationError as exc:
        return BobSample(transcript, claim, None, evaluated=True, correct=False, note=f"input: {exc}")
    except HarnessCrashError as exc:
        return BobSample(
            transcript, claim, None, evaluated=False, correct=False, note=f"infrastructure: {exc}"
        )
    if verdict.divergent:
        return BobSample(transcript, claim, verdict, evaluated=True, correct=True, note="verified diverging input")
    return BobSample(
        transcript, claim, verdict, evaluated=True, correct=False,
        note="claimed input does not diverge",
    )


def evaluate_with_bob(
    instance: ChallengeInstance,
    bob_agent: Agent,
    n: int,
    executor: SubjectExecutor,
    sampling: SamplingParams | None = None,
    templates: TemplateSet | None = None,
    transcript_log: TranscriptLog | None = None,
) -> tuple[DifficultyEstimate, tuple[BobSample, ...], int]:
    """Sample the evaluator n times on the pair and derive the difficulty.

    Transport failures shrink the sample count instead of counting as
    incorrect; if fewer than half of the requested samples could be
    evaluated the estimate is flagged unreliable. Returns the estimate,
    the per-sample records, and the transport-failure count.
    """
    templates = templates or builtin_templates()
    params = replace(sampling or SamplingParams(), n=n)
    prompt = templates.render_bob_prompt(instance.program_p, instance.program_q)
    batch = sample(bob_agent, prompt, params)
    if transcript_log is not None:
        for transcript in batch.transcripts:
            transcript_log.append(transcript, context="bob")
    samples = tuple(
        _score_bob_sample(instance, transcript, executor) for transcript in batch.transcripts
    )
    failed = batch.failed
    evaluated = [s for s in samples if s.evaluated]
    if not evaluated:
        raise EngineError("no evaluator sample could be evaluated")
    estimate = DifficultyEstimate.from_counts(
        n_correct=sum(s.correct for s in evaluated),
        n_samples=len(evaluated),
        reliable=2 * len(evaluated) >= n,
    )
    return estimate, samples, failed + sum(not s.evaluated for s in samples)


def play_round(
    program_p: SubjectProgram,
    alice_agent: Agent,
    bob_agent: Agent,
    config: RoundConfig,
    executor: SubjectExecutor,
    store: RecordStore | None = None,
    templates: TemplateSet | None = None,
    transcript_log: TranscriptLog | None = None,
    round_label: str = "round-0",
    clock: Clock = utc_clock,
) -> tuple[list[GameRecord], RoundStats]:
    """One full round on one source program.

    Samples the generator, verifies every response, scores each verified
    instance with the evaluator, and appends the records to the store.
    Per-sample failures land in the stats; only systemic failures raise.
    """
    templates = templates or builtin_templates()
    stats = RoundStats(alice_requested=config.alice_samples)
    prompt = templates.render_alice_prompt(program_p, config.target_difficulty)
    batch = sample(alice_agent, prompt, replace(config.sampling, n=config.alice_samples))
    stats.alice_received = len(batch.transcripts)
    if transcript_log is not None:
        for transcript in batch.transcripts:
            transcript_log.append(transcript, context="alice")

    records: list[GameRecord] = []
    for transcript in batch.transcripts:
        outcome = verify_alice(program_p, transcript, executor, config.target_difficulty)
        if isinstance(outcome, Rejection):
            stats.rejections[outcome.stage.value] += 1
            logger.debug("rejected %s: %s", outcome.stage.value, outcome.detail)
            continue
        stats.valid += 1
        estimate, bob_samples, bob_failed = evaluate_with_bob(
            outcome,
            bob_agent,
            config.bob_samples,
            executor,
            sampling=config.sampling,
            templates=templates,
            transcript_log=transcript_log,
        )
        stats.bob_transport_failures += bob_failed
        instance = outcome.with_difficulty(estimate)
        record = GameRecord(
            record_id=derive_record_id(instance),
            round_label=round_label,
            created_at=clock(),
            agent_versions=(alice_agent.agent_id, bob_agent.agent_id),
            instance=instance,
            alice_transcript=transcript,
            bob_samples=bob_samples,
            winner=compute_winner(bob_samples),
        )
        records.append(record)
        if store is not None:
            store.append(record)
    return records, stats


@dataclass
class RoundSummary:
    """Aggregates for one generation round over a dataset."""

    round_label: str
    programs_total: int = 0
    programs_played: int = 0
    programs_skipped_resume: int = 0
    programs_failed: int = 0
    records: int = 0
    mean_difficulty: float | None = None
    std_difficulty: float | None = None
    fraction_at_max: float | None = None
    stats: RoundStats = field(default_factory=RoundStats)
    failures: list[str] = field(default_factory=list)


def source_program_from_row(row: DatasetRow, executor: SubjectExecutor) -> SubjectProgram:
    """Normalize a dataset row into a playable source program."""
    normalized = executor.normalize(row.code)
    if entry_signature(normalized, row.entry_point) is None:
        raise SubjectSourceError(
            f"row {row.task_id}: entry point {row.entry_point!r} not defined at top level"
        )
    return SubjectProgram(
        source_code=normalized,
        entry_point=row.entry_point,
        origin=ProgramOrigin(OriginKind.DATASET, row.task_id),
    )


def run_generation_round(
    rows: Iterable[DatasetRow],
    alice_agent: Agent,
    bob_agent: Agent,
    config: RoundConfig,
    executor: SubjectExecutor,
    store: RecordStore,
    templates: TemplateSet | None = None,
    transcript_log: TranscriptLog | None = None,
    round_label: str = "round-0",
    clock: Clock = utc_clock,
    jobs: int = 1,
) -> RoundSummary:
    """Play a round per source program, resumably.

    Rows whose task id already appears in the store are skipped, so an
    interrupted round picks up where it stopped. Per-program failures are
    logged and skipped; credential failures abort the round. With jobs > 1
    programs play on a thread pool (bounded by the executor's harness pool)
    while the store keeps a single writer: workers buffer their records and
    the coordinator appends them in dataset order as programs finish.
    """
    rows = list(rows)
    summary = RoundSummary(round_label=round_label, programs_total=len(rows))
    already_played = store.source_ids()
    pending = [row for row in rows if row.task_id not in already_played]
    summary.programs_skipped_resume = len(rows) - len(pending)
    difficulties: list[float] = []

    def play_one(row: DatasetRow) -> tuple[list[GameRecord], RoundStats]:
        program_p = source_program_from_row(row, executor)
        return play_round(
            program_p,
            alice_agent,
            bob_agent,
            config,
            executor,
            store=None,
            templates=templates,
            transcript_log=transcript_log,
            round_label=round_label,
            clock=clock,
        )

    def finish(row: DatasetRow, records: list[GameRecord], stats: RoundStats) -> None:
        for record in records:
            store.append(record)
        summary.programs_played += 1
        summary.records += len(records)
        summary.stats.merge(stats)
        difficulties.extend(
            r.instance.difficulty.difficulty for r in records if r.instance.difficulty
        )

    def fail(row: DatasetRow, exc: Exception) -> None:
        summary.programs_failed += 1
        summary.failures.append(f"{row.task_id}: {exc}")
        logger.warning("program %s failed: %s", row.task_id, exc)

    recoverable = (GatewayError, ExecutorError, SubjectSourceError, EngineError)
    if jobs <= 1:
        for row in pending:
            try:
                records, stats = play_one(row)
            except AuthenticationError:
                raise
            except recoverable as exc:
                fail(row, exc)
                continue
            finish(row, records, stats)
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(row, pool.submit(play_one, row)) for row in pending]
            for row, future in futures:
                try:
                    records, stats = future.result()
                except AuthenticationError:
                    raise
                except recoverable as exc:
                    fail(row, exc)
                    continue
                finish(row, records, stats)

    if difficulties:
        summary.mean_difficulty = statistics.fmean(difficulties)
        summary.std_difficulty = statistics.pstdev(difficulties)
        summary.fraction_at_max = sum(d == 10.0 for d in difficulties) / len(difficulties)
    return summary


def reestimate_difficulties(
    store: RecordStore,
    bob_agent: Agent,
    n: int,
    executor: SubjectExecutor,
    sampling: SamplingParams | None = None,
    templates: TemplateSet | None = None,
    transcript_log: TranscriptLog | None = None,
) -> list[GameRecord]:
    """Re-score every stored instance against a (presumably newer)
    evaluator and rewrite the store, keeping the superseded estimate in
    each record's difficulty history."""
    records = store.load()
    updated: list[GameRecord] = []
    for record in records:
        estimate, bob_samples, _ = evaluate_with_bob(
            record.instance,
            bob_agent,
            n,
            executor,
            sampling=sampling,
            templates=templates,
            transcript_log=transcript_log,
        )
        history = record.difficulty_history
        if record.instance.difficulty is not None:
            history = history + (record.instance.difficulty,)
        updated.append(
            GameRecord(
                record_id=record.record_id,
                round_label=record.round_label,
                created_at=record.created_at,
                agent_versions=(record.agent_versions[0], bob_agent.agent_id),
                instance=record.instance.with_difficulty(estimate),
                alice_transcript=record.alice_transcript,
                bob_samples=bob_samples,
                winner=compute_winner(bob_samples),
                difficulty_history=history,
            )
        )
    store.rewrite(updated)
    return updated
