"""Turn accumulated game records into biased SFT chat datasets.

Three families: generator training examples (the measured difficulty is
substituted for the requested target), difficulty-prediction examples
(loss only on the final difficulty answer), and evaluator examples built
by rejection sampling from verified-correct evaluator responses. The
generator and difficulty families keep every hard record and only a
bin-balanced fraction of easy ones, so early rounds full of trivial
instances cannot swamp the training signal.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .gateway import TemplateSet, builtin_templates
from .model import ChatExample, ChatMessage, Role, round_difficulty
from .parser import ParseError, parse_alice_response
from .store import GameRecord

logger = logging.getLogger(__name__)

PURPOSE_ALICE = "alice-main"
PURPOSE_DIFF = "difficulty-prediction"
PURPOSE_BOB = "bob-main"


class ForgeError(ValueError):
    """A record cannot become a training example (missing difficulty,
    corrupt transcript, or a sample that never verified)."""


@dataclass(frozen=True)
class BiasPolicy:
    """Selection rules: keep all records at or above ``hard_threshold``,
    then add floor(easy_fraction x |hard|) easy records drawn round-robin
    from descending integer difficulty bins. ``per_round`` switches the
    quota computation from the accumulated pool to each round separately."""

    hard_threshold: float = 5.0
    easy_fraction_alice: float = 0.20
    easy_fraction_diff: float = 0.50
    per_round: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.hard_threshold <= 10:
            raise ValueError("hard_threshold must lie in [0, 10]")
        for fraction in (self.easy_fraction_alice, self.easy_fraction_diff):
            if not 0 <= fraction <= 1:
                raise ValueError("easy fractions must lie in [0, 1]")

    def easy_fraction(self, purpose: str) -> float:
        if purpose == PURPOSE_ALICE:
            return self.easy_fraction_alice
        if purpose == PURPOSE_DIFF:
            return self.easy_fraction_diff
        raise ValueError(f"no easy fraction for purpose {purpose!r}")


def _exact_difficulty(record: GameRecord) -> Fraction:
    estimate = record.instance.difficulty
    if estimate is None:
        raise ForgeError(f"record {record.record_id} has no difficulty estimate")
    return estimate.exact


def _select_pool(records: list[GameRecord], policy: BiasPolicy, purpose: str, rng: random.Random) -> list[GameRecord]:
    threshold = Fraction(policy.hard_threshold)
    hard = [r for r in records if _exact_difficulty(r) >= threshold]
    easy = [r for r in records if _exact_difficulty(r) < threshold]
    quota = math.floor(policy.easy_fraction(purpose) * len(hard))
    bins: dict[int, list[GameRecord]] = {}
    for record in easy:
        bins.setdefault(int(math.floor(_exact_difficulty(record))), []).append(record)
    for members in bins.values():
        rng.shuffle(members)
    picked: list[GameRecord] = []
    bin_order = sorted(bins, reverse=True)
    while len(picked) < quota:
        took_any = False
        for index in bin_order:
            if len(picked) >= quota:
                break
            if bins[index]:
                picked.append(bins[index].pop(0))
                took_any = True
        if not took_any:
            break
    return hard + picked


def select_training_instances(
    records: list[GameRecord],
    policy: BiasPolicy,
    purpose: str,
    rng: random.Random,
) -> list[GameRecord]:
    """Choose the records that become training examples for a purpose.

    Every hard record is kept exactly once; easy records are drawn without
    replacement, one per non-empty bin per pass, walking bins from hardest
    to easiest (near-threshold examples are the most informative ones).
    Within a bin the draw order is randomized by ``rng``.
    """
    if purpose not in (PURPOSE_ALICE, PURPOSE_DIFF):
        raise ValueError(f"selection applies to {PURPOSE_ALICE!r} or {PURPOSE_DIFF!r}, not {purpose!r}")
    if not policy.per_round:
        return _select_pool(list(records), policy, purpose, rng)
    by_round: dict[str, list[GameRecord]] = {}
    for record in records:
        by_round.setdefault(record.round_label, []).append(record)
    selected: list[GameRecord] = []
    for label in sorted(by_round):
        selected.extend(_select_pool(by_round[label], policy, purpose, rng))
    return selected


def _check_transcript(record: GameRecord) -> None:
    try:
        parse_alice_response(record.alice_transcript.response_text)
    except ParseError as exc:
        raise ForgeError(f"record {record.record_id} holds a corrupt transcript: {exc}") from exc


def build_alice_sft_example(record: GameRecord, templates: TemplateSet | None = None) -> ChatExample:
    """Generator training example: the stored exchange re-rendered with the
    measured difficulty (rounded) in place of the requested target."""
    templates = templates or builtin_templates()
    estimate = record.instance.difficulty
    if estimate is None:
        raise ForgeError(f"record {record.record_id} has no difficulty estimate")
    _check_transcript(record)
    prompt = templates.render_alice_prompt(
        record.instance.program_p, round_difficulty(estimate.difficulty)
    )
    (system_role, system_text), (user_role, user_text) = prompt.messages
    return ChatExample(
        messages=(
            ChatMessage(system_role, system_text),
            ChatMessage(user_role, user_text),
            ChatMessage(Role.ASSISTANT, record.alice_transcript.response_text, weight=1),
        ),
        tags=frozenset({PURPOSE_ALICE}),
    )


def build_difficulty_prediction_example(
    record: GameRecord, templates: TemplateSet | None = None
) -> ChatExample:
    """Difficulty-prediction example: target replaced by "Any", loss only
    on the final difficulty answer."""
    templates = templates or builtin_templates()
    _check_transcript(record)
    turns = templates.render_difficulty_prediction_turns(record)
    messages = []
    assistant_positions = [i for i, (role, _) in enumerate(turns.messages) if role is Role.ASSISTANT]
    for i, (role, content) in enumerate(turns.messages):
        if role is Role.ASSISTANT:
            weight = 1 if i == assistant_positions[-1] else 0
            messages.append(ChatMessage(role, content, weight=weight))
        else:
            messages.append(ChatMessage(role, content))
    return ChatExample(messages=tuple(messages), tags=frozenset({PURPOSE_DIFF}))


def build_bob_sft_example(
    record: GameRecord, sample_index: int, templates: TemplateSet | None = None
) -> ChatExample:
    """Evaluator training example from one verified-correct sample."""
    templates = templates or builtin_templates()
    try:
        bob_sample = record.bob_samples[sample_index]
    except IndexError as exc:
        raise ForgeError(f"record {record.record_id} has no sample {sample_index}") from exc
    if not (bob_sample.evaluated and bob_sample.correct):
        raise ForgeError(
            f"record {record.record_id} sample {sample_index} was not verified correct"
        )
    prompt = templates.render_bob_prompt(record.instance.program_p, record.instance.program_q)
    (system_role, system_text), (user_role, user_text) = prompt.messages
    return ChatExample(
        messages=(
            ChatMessage(system_role, system_text),
            ChatMessage(user_role, user_text),
            ChatMessage(Role.ASSISTANT, bob_sample.transcript.response_text, weight=1),
        ),
        tags=frozenset({PURPOSE_BOB}),
    )


@dataclass(frozen=True)
class DatasetBuild:
    """Examples plus the provenance emit_dataset needs for the manifest."""

    purpose: str
    examples: tuple[ChatExample, ...]
    difficulties: tuple[float, ...]
    policy: BiasPolicy | None


def build_dataset(
    records: list[GameRecord],
    purpose: str,
    policy: BiasPolicy,
    rng: random.Random,
    templates: TemplateSet | None = None,
) -> DatasetBuild:
    """Assemble one dataset family from a store snapshot.

    Generator and difficulty-prediction families apply the bias policy;
    the evaluator family takes every verified-correct sample of every
    record (rejection sampling needs no extra biasing).
    """
    templates = templates or builtin_templates()
    if purpose == PURPOSE_BOB:
        examples = []
        difficulties = []
        for record in records:
            for index, bob_sample in enumerate(record.bob_samples):
                if bob_sample.evaluated and bob_sample.correct:
                    examples.append(build_bob_sft_example(record, index, templates))
                    estimate = record.instance.difficulty
                    difficulties.append(estimate.difficulty if estimate else 0.0)
        return DatasetBuild(purpose, tuple(examples), tuple(difficulties), policy=None)
    selected = select_training_instances(records, policy, purpose, rng)
    builder = build_alice_sft_example if purpose == PURPOSE_ALICE else build_difficulty_prediction_example
    examples = [builder(record, templates) for record in selected]
    difficulties = [record.instance.difficulty.difficulty for record in selected]  # type: ignore[union-attr]
    return DatasetBuild(purpose, tuple(examples), tuple(difficulties), policy=policy)


def message_to_dict(message: ChatMessage) -> dict:
    """Serialized message; the weight key appears exactly when an assistant
    message is masked out (weight 0), the platform-common convention."""
    data = {"role": message.role.value, "content": message.content}
    if message.weight == 0:
        data["weight"] = 0
    return data


def example_to_line(example: ChatExample) -> str:
    return json.dumps(
        {"messages": [message_to_dict(m) for m in example.messages]}, ensure_ascii=False
    )


def _validate_weights(example: ChatExample) -> None:
    assistants = [m for m in example.messages if m.role is Role.ASSISTANT]
    weighted = [m for m in assistants if m.weight == 1]
    if PURPOSE_DIFF in example.tags:
        if len(weighted) != 1 or assistants[-1].weight != 1:
            raise ForgeError("difficulty-prediction weights exactly the final assistant message")
    elif len(weighted) != 1 or len(assistants) != 1:
        raise ForgeError("single-turn examples weight exactly one assistant message")


def emit_dataset(build: DatasetBuild, path: Path | str, overwrite: bool = False) -> dict:
    """Write the dataset as chat JSONL plus a sidecar manifest.

    Refuses to overwrite an existing file unless told to. Returns the
    manifest (counts per tag, difficulty histogram, policy, content hash),
    which is also written next to the dataset as ``<name>.manifest.json``.
    """
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass overwrite to replace it")
    for example in build.examples:
        _validate_weights(example)
    lines = [example_to_line(example) for example in build.examples]
    content = "".join(line + "\n" for line in lines)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")

    counts: dict[str, int] = {}
    for example in build.examples:
        for tag in sorted(example.tags):
            counts[tag] = counts.get(tag, 0) + 1
    histogram = {str(b): 0 for b in range(11)}
    for value in build.difficulties:
        histogram[str(min(10, int(math.floor(value))))] += 1
    manifest = {
        "purpose": build.purpose,
        "examples": len(build.examples),
        "counts_per_tag": counts,
        "difficulty_histogram": histogram,
        "policy": None
        if build.policy is None
        else {
            "hard_threshold": build.policy.hard_threshold,
            "easy_fraction_alice": build.policy.easy_fraction_alice,
            "easy_fraction_diff": build.policy.easy_fraction_diff,
            "per_round": build.policy.per_round,
        },
        "content_hash": hashlib.sha256(content.encode("utf-8")).hexdigest(),
    }
    manifest_path = path.with_name(path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    if not build.examples:
        logger.warning("emitted empty dataset to %s", path)
    return manifest
