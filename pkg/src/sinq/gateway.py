"""Agent abstraction and prompt construction.

Prompts are rendered from golden template resources (overridable via a
template directory, whose content hash is folded into the agent id so
datasets record which templates produced them). Two agent flavours speak
the same interface: a remote chat-completions endpoint with retry and
backoff, and a deterministic scripted agent keyed by prompt digest that
makes the whole engine runnable with zero network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Protocol

import httpx

from .model import ANY_DIFFICULTY, Role, SubjectProgram, TargetDifficulty, round_difficulty

if TYPE_CHECKING:
    from .store import GameRecord

#: Environment variable holding the remote endpoint credential.
API_KEY_ENV = "SINQ_API_KEY"

_TEMPLATE_FILES = {
    "alice_system": "alice_system.txt",
    "alice_user": "alice_user.txt",
    "bob_system": "bob_system.txt",
    "bob_user": "bob_user.txt",
    "difficulty_user": "difficulty_user.txt",
    "difficulty_assistant": "difficulty_assistant.txt",
}


class GatewayError(RuntimeError):
    """Transport-level failure talking to an agent."""


class AuthenticationError(GatewayError):
    """Credential or quota problem; retrying cannot help."""


@dataclass(frozen=True)
class SamplingParams:
    """Generation settings; the defaults match the game's sampling setup
    (temperature 1.0, top_p 0.7, 10 samples per query)."""

    temperature: float = 1.0
    top_p: float = 0.7
    n: int = 10
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.n < 1 or self.max_output_tokens < 1:
            raise ValueError("n and max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatPrompt:
    """Ordered (role, content) messages; exactly one system message, first."""

    messages: tuple[tuple[Role, str], ...]

    def __post_init__(self) -> None:
        system_positions = [i for i, (role, _) in enumerate(self.messages) if role is Role.SYSTEM]
        if system_positions != [0]:
            raise ValueError("a prompt carries exactly one system message, first")

    def digest(self) -> str:
        payload = json.dumps(
            [{"role": role.value, "content": content} for role, content in self.messages],
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AgentTranscript:
    """One verbatim completion, with enough provenance to replay it."""

    transcript_id: str
    prompt_digest: str
    response_text: str
    agent_id: str
    sampling: SamplingParams
    usage: dict[str, int] | None = None


@dataclass(frozen=True)
class SampleBatch:
    """Up to n transcripts plus the count of samples that never arrived."""

    transcripts: tuple[AgentTranscript, ...]
    failed: int = 0


@dataclass(frozen=True)
class TemplateSet:
    """The six prompt templates, loaded from package resources by default.

    User templates are str.format templates; system templates are used
    verbatim. ``digest`` identifies the template text so overridden
    templates are traceable in agent ids and dataset manifests.
    """

    alice_system: str
    alice_user: str
    bob_system: str
    bob_user: str
    difficulty_user: str
    difficulty_assistant: str

    @staticmethod
    def builtin() -> "TemplateSet":
        root = resources.files("sinq") / "templates"
        return TemplateSet(**{
            name: (root / filename).read_text(encoding="utf-8")
            for name, filename in _TEMPLATE_FILES.items()
        })

    @staticmethod
    def from_directory(path: Path) -> "TemplateSet":
        return TemplateSet(**{
            name: (path / filename).read_text(encoding="utf-8")
            for name, filename in _TEMPLATE_FILES.items()
        })

    def digest(self) -> str:
        hasher = hashlib.sha256()
        for name in sorted(_TEMPLATE_FILES):
            hasher.update(name.encode())
            hasher.update(b"\0")
            hasher.update(getattr(self, name).encode("utf-8"))
            hasher.update(b"\0")
        return hasher.hexdigest()

    def render_alice_prompt(self, program: SubjectProgram, difficulty_level: TargetDifficulty) -> ChatPrompt:
        """Generator prompt: difficulty target (0..10 in decimal, or "Any"),
        entry point name, and the fenced source program."""
        level = difficulty_level if difficulty_level == ANY_DIFFICULTY else str(int(difficulty_level))
        user = self.alice_user.format(
            difficulty_level=level,
            function_name=program.entry_point,
            code=program.source_code,
        )
        return ChatPrompt(((Role.SYSTEM, self.alice_system), (Role.USER, user)))

    def render_bob_prompt(self, program_p: SubjectProgram, program_q: SubjectProgram) -> ChatPrompt:
        """Evaluator prompt over the pair, P first."""
        if program_p.entry_point != program_q.entry_point:
            raise ValueError("bob prompt requires matching entry points")
        user = self.bob_user.format(
            function_name=program_p.entry_point,
            code_P=program_p.source_code,
            code_Q=program_q.source_code,
        )
        return ChatPrompt(((Role.SYSTEM, self.bob_system), (Role.USER, user)))

    def render_difficulty_prediction_turns(self, record: "GameRecord") -> ChatPrompt:
        """Four-turn difficulty-prediction conversation for a scored record:
        the original exchange re-rendered with target "Any", then the
        prediction question and the measured difficulty as the answer."""
        estimate = record.instance.difficulty
        if estimate is None:
            raise ValueError("record has no difficulty estimate")
        first = self.render_alice_prompt(record.instance.program_p, ANY_DIFFICULTY)
        answer = self.difficulty_assistant.format(
            difficulty_level=str(round_difficulty(estimate.difficulty))
        )
        return ChatPrompt(
            first.messages
            + (
                (Role.ASSISTANT, record.alice_transcript.response_text),
                (Role.USER, self.difficulty_user),
                (Role.ASSISTANT, answer),
            )
        )


_BUILTIN: TemplateSet | None = None


def builtin_templates() -> TemplateSet:
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = TemplateSet.builtin()
    return _BUILTIN


def render_alice_prompt(program: SubjectProgram, difficulty_level: TargetDifficulty) -> ChatPrompt:
    return builtin_templates().render_alice_prompt(program, difficulty_level)


def render_bob_prompt(program_p: SubjectProgram, program_q: SubjectProgram) -> ChatPrompt:
    return builtin_templates().render_bob_prompt(program_p, program_q)


def render_difficulty_prediction_turns(record: "GameRecord") -> ChatPrompt:
    return builtin_templates().render_difficulty_prediction_turns(record)


class Agent(Protocol):
    """Anything that can complete a chat prompt n times."""

    agent_id: str

    def complete(self, prompt: ChatPrompt, params: SamplingParams) -> list[str]:
        """Return up to params.n completion texts; may return fewer on
        partial failure; raises GatewayError when nothing was produced."""
        ...


def _transcript_id(prompt_digest: str, index: int, response_text: str) -> str:
    hasher = hashlib.sha256()
    hasher.update(prompt_digest.encode())
    hasher.update(f":{index}:".encode())
    hasher.update(response_text.encode("utf-8"))
    return hasher.hexdigest()[:16]


def sample(agent: Agent, prompt: ChatPrompt, params: SamplingParams) -> SampleBatch:
    """Draw up to params.n completions and wrap them as transcripts.

    Responses are stored verbatim; a short batch is reported through the
    ``failed`` count instead of failing the round. An empty batch raises.
    """
    digest = prompt.digest()
    texts = agent.complete(prompt, params)
    if not texts:
        raise GatewayError(f"agent {agent.agent_id} produced an empty batch")
    transcripts = tuple(
        AgentTranscript(
            transcript_id=_transcript_id(digest, i, text),
            prompt_digest=digest,
            response_text=text,
            agent_id=agent.agent_id,
            sampling=params,
        )
        for i, text in enumerate(texts[: params.n])
    )
    return SampleBatch(transcripts=transcripts, failed=params.n - len(transcripts))


@dataclass
class ScriptedAgent:
    """Deterministic agent: a table from prompt digest to canned responses.

    Each call returns the first n canned responses for the prompt, so
    repeated calls are reproducible. Missing prompts raise, surfacing
    fixture gaps instead of silently shrinking a round.
    """

    script: dict[str, list[str]]
    agent_id: str = "scripted"

    def complete(self, prompt: ChatPrompt, params: SamplingParams) -> list[str]:
        digest = prompt.digest()
        if digest not in self.script:
            raise GatewayError(f"scripted agent {self.agent_id} has no entry for prompt {digest[:12]}")
        return list(self.script[digest][: params.n])

    @staticmethod
    def for_prompts(entries: list[tuple[ChatPrompt, list[str]]], agent_id: str = "scripted") -> "ScriptedAgent":
        return ScriptedAgent({prompt.digest(): list(responses) for prompt, responses in entries}, agent_id)


_RETRIABLE_STATUS = {429, 500, 502, 503, 504}
_AUTH_STATUS = {401, 403}


@dataclass
class HttpChatAgent:
    """Chat-completions client over the common messages/temperature/top_p/n
    API shape.

    Transient failures (timeouts, 5xx, 429) are retried with exponential
    backoff; authentication and quota errors surface immediately. Fewer
    choices than requested are passed through as a partial batch.
    """

    endpoint: str
    model: str
    agent_id: str = ""
    api_key: str | None = None
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 0.5
    client: httpx.Client | None = None
    _sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def __post_init__(self) -> None:
        if not self.agent_id:
            self.agent_id = self.model
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)

    def complete(self, prompt: ChatPrompt, params: SamplingParams) -> list[str]:
        payload = {
            "model": self.model,
            "messages": [
                {"role": role.value, "content": content} for role, content in prompt.messages
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "n": params.n,
            "max_tokens": params.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        client = self.client or httpx.Client(timeout=self.timeout)
        owns_client = self.client is None
        try:
            last_error: Exception | None = None
            for attempt in range(self.max_retries + 1):
                if attempt:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
                try:
                    response = client.post(self.endpoint, json=payload, headers=headers)
                except httpx.HTTPError as exc:
                    last_error = exc
                    continue
                if response.status_code in _AUTH_STATUS:
                    raise AuthenticationError(
                        f"endpoint rejected credentials (HTTP {response.status_code})"
                    )
                if response.status_code in _RETRIABLE_STATUS:
                    last_error = GatewayError(f"transient HTTP {response.status_code}")
                    continue
                if response.status_code != 200:
                    raise GatewayError(f"endpoint returned HTTP {response.status_code}: {response.text[:200]}")
                try:
                    data = response.json()
                except ValueError as exc:
                    raise GatewayError(f"endpoint returned non-JSON body: {exc}") from exc
                return self._extract_texts(data)
            raise GatewayError(f"all {self.max_retries + 1} attempts failed") from last_error
        finally:
            if owns_client:
                client.close()

    @staticmethod
    def _extract_texts(data: dict) -> list[str]:
        try:
            choices = data["choices"]
            return [choice["message"]["content"] for choice in choices]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc
