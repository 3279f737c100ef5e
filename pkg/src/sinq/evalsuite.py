"""Intrinsic evaluation and round statistics.

Solve rates come in two readings: an instance counts as solved when any of
n evaluator samples verifies (any-of-n), and the strict per-sample rate is
the fraction of all samples that verified. Both are reported because they
answer different questions; reports are pure functions of the inputs.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field

from .engine import evaluate_with_bob
from .executor import SubjectExecutor
from .gateway import Agent, SamplingParams, TemplateSet
from .model import ChallengeInstance
from .store import GameRecord, TranscriptLog


@dataclass(frozen=True)
class InstanceResult:
    index: int
    solved: bool
    n_samples: int
    n_correct: int
    difficulty: float


@dataclass(frozen=True)
class SolveRateReport:
    total: int
    solved: int
    solve_rate_any: float | None
    samples_evaluated: int
    samples_correct: int
    solve_rate_strict: float | None
    per_instance: tuple[InstanceResult, ...]
    difficulty_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "solved": self.solved,
            "solve_rate_any": self.solve_rate_any,
            "samples_evaluated": self.samples_evaluated,
            "samples_correct": self.samples_correct,
            "solve_rate_strict": self.solve_rate_strict,
            "undefined": self.total == 0,
            "per_instance": [
                {
                    "index": r.index,
                    "solved": r.solved,
                    "n_samples": r.n_samples,
                    "n_correct": r.n_correct,
                    "difficulty": r.difficulty,
                }
                for r in self.per_instance
            ],
            "difficulty_histogram": self.difficulty_histogram,
        }


def intrinsic_eval(
    instances: list[ChallengeInstance],
    bob_agent: Agent,
    n: int,
    executor: SubjectExecutor,
    sampling: SamplingParams | None = None,
    templates: TemplateSet | None = None,
    transcript_log: TranscriptLog | None = None,
) -> SolveRateReport:
    """Fraction of verified instances the evaluator solves.

    An instance is solved when at least one of its n samples produces a
    verified diverging input. An empty instance set yields a report with
    total 0 and undefined (None) rates rather than a fake percentage.
    """
    results: list[InstanceResult] = []
    histogram = {str(b): 0 for b in range(11)}
    samples_evaluated = 0
    samples_correct = 0
    for index, instance in enumerate(instances):
        estimate, _, _ = evaluate_with_bob(
            instance,
            bob_agent,
            n,
            executor,
            sampling=sampling,
            templates=templates,
            transcript_log=transcript_log,
        )
        samples_evaluated += estimate.n_samples
        samples_correct += estimate.n_correct
        results.append(
            InstanceResult(
                index=index,
                solved=estimate.n_correct > 0,
                n_samples=estimate.n_samples,
                n_correct=estimate.n_correct,
                difficulty=estimate.difficulty,
            )
        )
        histogram[str(min(10, int(math.floor(estimate.difficulty))))] += 1
    total = len(results)
    solved = sum(r.solved for r in results)
    return SolveRateReport(
        total=total,
        solved=solved,
        solve_rate_any=(solved / total) if total else None,
        samples_evaluated=samples_evaluated,
        samples_correct=samples_correct,
        solve_rate_strict=(samples_correct / samples_evaluated) if samples_evaluated else None,
        per_instance=tuple(results),
        difficulty_histogram=histogram,
    )


@dataclass(frozen=True)
class RoundRow:
    round_label: str
    count: int
    mean_difficulty: float
    std_difficulty: float
    fraction_at_max: float


@dataclass(frozen=True)
class RoundStatistics:
    rows: tuple[RoundRow, ...] = field(default_factory=tuple)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["round", "count", "mean_difficulty", "std_difficulty", "fraction_at_max"])
        for row in self.rows:
            writer.writerow(
                [row.round_label, row.count, row.mean_difficulty, row.std_difficulty, row.fraction_at_max]
            )
        return buffer.getvalue()

    def to_dict(self) -> dict:
        return {
            "rounds": [
                {
                    "round": r.round_label,
                    "count": r.count,
                    "mean_difficulty": r.mean_difficulty,
                    "std_difficulty": r.std_difficulty,
                    "fraction_at_max": r.fraction_at_max,
                }
                for r in self.rows
            ]
        }


def round_statistics(records: list[GameRecord]) -> RoundStatistics:
    """Per-round mean/std difficulty and the fraction of instances at the
    maximum difficulty (an instance no evaluator sample solved).

    Standard deviation is the population form, so a single record gives 0.
    Maximum difficulty is the exact n_correct == 0 condition, not a float
    comparison against 10.0.
    """
    by_round: dict[str, list[GameRecord]] = {}
    for record in records:
        if record.instance.difficulty is None:
            raise ValueError(f"record {record.record_id} has no difficulty estimate")
        by_round.setdefault(record.round_label, []).append(record)
    rows = []
    for label in sorted(by_round):
        group = by_round[label]
        values = [r.instance.difficulty.difficulty for r in group]  # type: ignore[union-attr]
        at_max = sum(r.instance.difficulty.n_correct == 0 for r in group)  # type: ignore[union-attr]
        rows.append(
            RoundRow(
                round_label=label,
                count=len(group),
                mean_difficulty=statistics.fmean(values),
                std_difficulty=statistics.pstdev(values),
                fraction_at_max=at_max / len(group),
            )
        )
    return RoundStatistics(rows=tuple(rows))
