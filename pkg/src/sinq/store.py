"""Game record model and the append-only JSONL instance store.

One GameRecord per line, schema "sinq_record_v1", UTF-8, keys in fixed
order so stores diff cleanly. Round play only ever appends; difficulty
re-estimation rewrites the file atomically while preserving superseded
estimates in each record's history.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .gateway import AgentTranscript, SamplingParams
from .model import (
    ChallengeInstance,
    DifficultyEstimate,
    DivergenceVerdict,
    ExecutionOutcome,
    InputExample,
    OriginKind,
    OutcomeKind,
    ProgramOrigin,
    SubjectProgram,
    Winner,
)
from .parser import BobArtifacts

RECORD_SCHEMA = "sinq_record_v1"


class StoreError(RuntimeError):
    """The store file is unreadable or violates the record schema."""


@dataclass(frozen=True)
class BobSample:
    """One evaluator sample: the verbatim transcript, what it claimed, and
    how verification went.

    ``evaluated`` is false only for infrastructure failures (those shrink
    the sample count instead of counting as wrong); ``correct`` requires a
    "No" claim whose input was re-verified divergent by execution. ``note``
    names why a sample scored the way it did.
    """

    transcript: AgentTranscript
    claim: BobArtifacts | None
    verdict: DivergenceVerdict | None
    evaluated: bool
    correct: bool
    note: str = ""


@dataclass(frozen=True)
class GameRecord:
    """Full transcript of one verified round: the instance, every evaluator
    sample, and the difficulty derived from exactly those samples."""

    record_id: str
    round_label: str
    created_at: str
    agent_versions: tuple[str, str]
    instance: ChallengeInstance
    alice_transcript: AgentTranscript
    bob_samples: tuple[BobSample, ...]
    winner: Winner
    difficulty_history: tuple[DifficultyEstimate, ...] = ()

    def __post_init__(self) -> None:
        if self.alice_transcript.transcript_id != self.instance.alice_transcript_id:
            raise ValueError("embedded transcript does not match instance.alice_transcript_id")
        estimate = self.instance.difficulty
        if estimate is not None:
            evaluated = [s for s in self.bob_samples if s.evaluated]
            if estimate.n_samples != len(evaluated) or estimate.n_correct != sum(
                s.correct for s in evaluated
            ):
                raise ValueError("difficulty estimate must derive from the recorded samples")


def derive_record_id(instance: ChallengeInstance) -> str:
    hasher = hashlib.sha256()
    for part in (
        instance.program_p.origin.source_id,
        instance.program_q.source_code,
        instance.alice_transcript_id,
        json.dumps(instance.alice_input.bindings, ensure_ascii=False, sort_keys=True),
    ):
        hasher.update(part.encode("utf-8"))
        hasher.update(b"\0")
    return hasher.hexdigest()[:16]


def compute_winner(samples: tuple[BobSample, ...]) -> Winner:
    """Evaluator wins the round if any sample found a verified diverging
    input; otherwise the generator wins."""
    return Winner.BOB if any(s.correct for s in samples) else Winner.ALICE


# ---------------------------------------------------------------------------
# JSON codecs. Dicts are built key-by-key in a fixed order on purpose.
# ---------------------------------------------------------------------------


def _program_to_dict(p: SubjectProgram) -> dict:
    return {
        "source_code": p.source_code,
        "entry_point": p.entry_point,
        "origin": {"kind": p.origin.kind.value, "source_id": p.origin.source_id},
    }


def _program_from_dict(d: dict) -> SubjectProgram:
    return SubjectProgram(
        source_code=d["source_code"],
        entry_point=d["entry_point"],
        origin=ProgramOrigin(OriginKind(d["origin"]["kind"]), d["origin"]["source_id"]),
    )


def _outcome_to_dict(o: ExecutionOutcome) -> dict:
    return {
        "kind": o.kind.value,
        "value_repr": o.value_repr,
        "exception_type": o.exception_type,
        "exception_message": o.exception_message,
        "wall_time": o.wall_time,
    }


def _outcome_from_dict(d: dict) -> ExecutionOutcome:
    return ExecutionOutcome(
        kind=OutcomeKind(d["kind"]),
        value_repr=d["value_repr"],
        exception_type=d["exception_type"],
        exception_message=d.get("exception_message", ""),
        wall_time=d["wall_time"],
    )


def _verdict_to_dict(v: DivergenceVerdict) -> dict:
    return {
        "divergent": v.divergent,
        "outcome_p": _outcome_to_dict(v.outcome_p),
        "outcome_q": _outcome_to_dict(v.outcome_q),
        "time_limit": v.time_limit,
        "stability_confirmed": v.stability_confirmed,
        "episodes": v.episodes,
    }


def _verdict_from_dict(d: dict) -> DivergenceVerdict:
    return DivergenceVerdict(
        divergent=d["divergent"],
        outcome_p=_outcome_from_dict(d["outcome_p"]),
        outcome_q=_outcome_from_dict(d["outcome_q"]),
        time_limit=d["time_limit"],
        stability_confirmed=d["stability_confirmed"],
        episodes=d.get("episodes", 1),
    )


def _estimate_to_dict(e: DifficultyEstimate | None) -> dict | None:
    if e is None:
        return None
    return {
        "n_samples": e.n_samples,
        "n_correct": e.n_correct,
        "difficulty": e.difficulty,
        "reliable": e.reliable,
    }


def _estimate_from_dict(d: dict | None) -> DifficultyEstimate | None:
    if d is None:
        return None
    return DifficultyEstimate(
        n_samples=d["n_samples"],
        n_correct=d["n_correct"],
        difficulty=d["difficulty"],
        reliable=d.get("reliable", True),
    )


def _transcript_to_dict(t: AgentTranscript) -> dict:
    return {
        "transcript_id": t.transcript_id,
        "prompt_digest": t.prompt_digest,
        "response_text": t.response_text,
        "agent_id": t.agent_id,
        "sampling": {
            "temperature": t.sampling.temperature,
            "top_p": t.sampling.top_p,
            "n": t.sampling.n,
            "max_output_tokens": t.sampling.max_output_tokens,
        },
        "usage": t.usage,
    }


def _transcript_from_dict(d: dict) -> AgentTranscript:
    s = d["sampling"]
    return AgentTranscript(
        transcript_id=d["transcript_id"],
        prompt_digest=d["prompt_digest"],
        response_text=d["response_text"],
        agent_id=d["agent_id"],
        sampling=SamplingParams(
            temperature=s["temperature"],
            top_p=s["top_p"],
            n=s["n"],
            max_output_tokens=s["max_output_tokens"],
        ),
        usage=d.get("usage"),
    )


def _claim_to_dict(c: BobArtifacts | None) -> dict | None:
    if c is None:
        return None
    return {
        "analysis": c.analysis,
        "claims_equivalent": c.claims_equivalent,
        "input_literal": c.input_literal,
    }


def _claim_from_dict(d: dict | None) -> BobArtifacts | None:
    if d is None:
        return None
    return BobArtifacts(
        analysis=d["analysis"],
        claims_equivalent=d["claims_equivalent"],
        input_literal=d["input_literal"],
    )


def _sample_to_dict(s: BobSample) -> dict:
    return {
        "transcript": _transcript_to_dict(s.transcript),
        "claim": _claim_to_dict(s.claim),
        "verdict": _verdict_to_dict(s.verdict) if s.verdict is not None else None,
        "evaluated": s.evaluated,
        "correct": s.correct,
        "note": s.note,
    }


def _sample_from_dict(d: dict) -> BobSample:
    return BobSample(
        transcript=_transcript_from_dict(d["transcript"]),
        claim=_claim_from_dict(d["claim"]),
        verdict=_verdict_from_dict(d["verdict"]) if d["verdict"] is not None else None,
        evaluated=d["evaluated"],
        correct=d["correct"],
        note=d.get("note", ""),
    )


def record_to_dict(record: GameRecord) -> dict:
    instance = record.instance
    return {
        "schema": RECORD_SCHEMA,
        "record_id": record.record_id,
        "round_label": record.round_label,
        "created_at": record.created_at,
        "agent_versions": {"alice": record.agent_versions[0], "bob": record.agent_versions[1]},
        "instance": {
            "program_p": _program_to_dict(instance.program_p),
            "program_q": _program_to_dict(instance.program_q),
            "alice_input": {"bindings": instance.alice_input.bindings},
            "alice_transcript_id": instance.alice_transcript_id,
            "verdict": _verdict_to_dict(instance.verdict),
            "target_difficulty": instance.target_difficulty,
            "difficulty": _estimate_to_dict(instance.difficulty),
        },
        "alice_transcript": _transcript_to_dict(record.alice_transcript),
        "bob_samples": [_sample_to_dict(s) for s in record.bob_samples],
        "winner": record.winner.value,
        "difficulty_history": [_estimate_to_dict(e) for e in record.difficulty_history],
    }


def record_from_dict(data: dict) -> GameRecord:
    if data.get("schema") != RECORD_SCHEMA:
        raise StoreError(f"unsupported record schema: {data.get('schema')!r}")
    inst = data["instance"]
    instance = ChallengeInstance(
        program_p=_program_from_dict(inst["program_p"]),
        program_q=_program_from_dict(inst["program_q"]),
        alice_input=InputExample(bindings=inst["alice_input"]["bindings"]),
        alice_transcript_id=inst["alice_transcript_id"],
        verdict=_verdict_from_dict(inst["verdict"]),
        target_difficulty=inst["target_difficulty"],
        difficulty=_estimate_from_dict(inst["difficulty"]),
    )
    return GameRecord(
        record_id=data["record_id"],
        round_label=data["round_label"],
        created_at=data["created_at"],
        agent_versions=(data["agent_versions"]["alice"], data["agent_versions"]["bob"]),
        instance=instance,
        alice_transcript=_transcript_from_dict(data["alice_transcript"]),
        bob_samples=tuple(_sample_from_dict(s) for s in data["bob_samples"]),
        winner=Winner(data["winner"]),
        difficulty_history=tuple(
            _estimate_from_dict(e) for e in data.get("difficulty_history", [])
        ),
    )


def record_to_line(record: GameRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False)


class RecordStore:
    """Append-only JSONL store of GameRecords with a single-writer append
    discipline. Loading tolerates nothing: a bad line is a hard error."""

    def __init__(self, path: Path | str):
        self.path = Path(path)

    def append(self, record: GameRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(record_to_line(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def __iter__(self) -> Iterator[GameRecord]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield record_from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise StoreError(f"{self.path}:{lineno}: {exc}") from exc

    def load(self) -> list[GameRecord]:
        return list(self)

    def source_ids(self) -> set[str]:
        """Dataset row ids already played, for resumable rounds."""
        return {r.instance.program_p.origin.source_id for r in self}

    def rewrite(self, records: list[GameRecord]) -> None:
        """Atomically replace the store content (difficulty re-estimation)."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for record in records:
                    fh.write(record_to_line(record) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp_name, self.path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


class TranscriptLog:
    """Crash-safe audit trail: every sampled transcript is appended here
    verbatim before any parsing happens. Appends are lock-guarded so
    parallel rounds can share one log."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()

    @staticmethod
    def beside(store_path: Path | str) -> "TranscriptLog":
        p = Path(store_path)
        return TranscriptLog(p.with_name(p.stem + ".transcripts.jsonl"))

    def append(self, transcript: AgentTranscript, context: str) -> None:
        entry = {"context": context, **_transcript_to_dict(transcript)}
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
                fh.flush()
