"""Host-side execution driver for subject programs.

Samples randomized wall-clock limits, delegates runs to pooled subject
harness worker processes over a line-delimited JSON protocol, and turns
paired runs into divergence verdicts. Within one comparison episode both
programs share a single sampled limit; stability re-runs draw fresh limits
so divergences that hinge on a particular limit get filtered out.
"""

from __future__ import annotations

import json
import os
import random
import select
import subprocess
import sys
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from queue import Empty, LifoQueue

from .model import (
    DivergenceVerdict,
    ExecutionOutcome,
    InputExample,
    OutcomeKind,
    SubjectProgram,
    canonical_equal,
)
from .subjects import render_bindings_literal

HARNESS_PROTOCOL = "sinq_harness_v1"

#: Extra wall-clock slack allowed on top of a run's time limit before the
#: harness process itself is declared dead (covers interpreter spawn cost).
_RESPONSE_GRACE = 15.0


class ExecutorError(RuntimeError):
    """Base class for execution-infrastructure failures."""


class HarnessCrashError(ExecutorError):
    """The harness process died or broke protocol; the run is retriable."""


class HarnessProtocolError(ExecutorError):
    """The worker speaks a different protocol version."""


class NormalizationError(ExecutorError):
    """Subject source failed to parse; carries the parser message."""


class InputValidationError(ExecutorError):
    """An input literal was rejected (not a literal mapping, bad keys,
    unsupported value kinds, or keys not accepted by the entry point)."""


class UnserializableResultError(ExecutorError):
    """A run returned a value with no canonical serialization; the
    enclosing game must treat the instance as invalid."""


def sample_time_limit(rng: random.Random, limit_low: float, limit_high: float) -> float:
    """One draw from the continuous uniform distribution on
    [limit_low, limit_high]; advances rng deterministically."""
    if not 0 < limit_low <= limit_high:
        raise ValueError("require 0 < limit_low <= limit_high")
    return rng.uniform(limit_low, limit_high)


@dataclass(frozen=True)
class ExecutorConfig:
    """Execution settings. The 2.5-5.5 s limit window deliberately dwarfs
    normal fixture runtimes so a generator cannot calibrate delays against
    a fixed deadline."""

    limit_low: float = 2.5
    limit_high: float = 5.5
    stability_checks: int = 1
    pool_size: int = 1
    rng_seed: int = 0
    shared_limit: bool = True
    harness_command: tuple[str, ...] = (sys.executable, "-m", "sinq_harness")

    def __post_init__(self) -> None:
        if not 0 < self.limit_low <= self.limit_high:
            raise ValueError("require 0 < limit_low <= limit_high")
        if self.stability_checks < 0 or self.pool_size < 1:
            raise ValueError("stability_checks >= 0 and pool_size >= 1 required")


class SubjectExecutor(ABC):
    """Time-limit sampling, execution, and divergence checking for program
    pairs. Subclasses provide the three primitive operations; the episode
    logic lives here so every executor, mock or real, applies identical
    game rules."""

    def __init__(self, config: ExecutorConfig):
        self.config = config
        self._rng = random.Random(config.rng_seed)
        self._rng_lock = threading.Lock()

    def sample_time_limit(self) -> float:
        with self._rng_lock:
            return sample_time_limit(self._rng, self.config.limit_low, self.config.limit_high)

    @abstractmethod
    def normalize(self, source: str) -> str:
        """Canonical form of subject source; NormalizationError on bad syntax."""

    @abstractmethod
    def validate_input(self, bindings_literal: str) -> InputExample:
        """Canonical bindings for a literal; InputValidationError otherwise."""

    @abstractmethod
    def execute(self, program: SubjectProgram, input_example: InputExample, time_limit: float) -> ExecutionOutcome:
        """Run the entry point on the bindings under the wall-clock limit."""

    def _compare_once(
        self, p: SubjectProgram, q: SubjectProgram, input_example: InputExample
    ) -> tuple[ExecutionOutcome, ExecutionOutcome, float]:
        limit_p = self.sample_time_limit()
        limit_q = limit_p if self.config.shared_limit else self.sample_time_limit()
        outcome_p = self.execute(p, input_example, limit_p)
        outcome_q = self.execute(q, input_example, limit_q)
        return outcome_p, outcome_q, limit_p

    def check_divergence(
        self, p: SubjectProgram, q: SubjectProgram, input_example: InputExample
    ) -> DivergenceVerdict:
        """Compare P and Q on one input.

        One limit is sampled per comparison episode and shared by both
        programs. A divergence must survive ``stability_checks`` further
        episodes under freshly sampled limits; one that does not is
        reported divergent=false with stability_confirmed=false, and the
        verdict carries the outcomes of the episode that decided it.
        """
        if p.entry_point != q.entry_point:
            raise ValueError("check_divergence requires matching entry points")
        outcome_p, outcome_q, limit = self._compare_once(p, q, input_example)
        episodes = 1
        if canonical_equal(outcome_p, outcome_q):
            return DivergenceVerdict(
                divergent=False,
                outcome_p=outcome_p,
                outcome_q=outcome_q,
                time_limit=limit,
                stability_confirmed=False,
                episodes=episodes,
            )
        for _ in range(self.config.stability_checks):
            outcome_p, outcome_q, limit = self._compare_once(p, q, input_example)
            episodes += 1
            if canonical_equal(outcome_p, outcome_q):
                return DivergenceVerdict(
                    divergent=False,
                    outcome_p=outcome_p,
                    outcome_q=outcome_q,
                    time_limit=limit,
                    stability_confirmed=False,
                    episodes=episodes,
                )
        return DivergenceVerdict(
            divergent=True,
            outcome_p=outcome_p,
            outcome_q=outcome_q,
            time_limit=limit,
            stability_confirmed=True,
            episodes=episodes,
        )

    def close(self) -> None:  # pragma: no cover - default no-op
        pass

    def __enter__(self) -> "SubjectExecutor":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class _HarnessClient:
    """One worker process speaking line-delimited JSON on its pipes."""

    def __init__(self, command: tuple[str, ...]):
        self._command = command
        self._proc: subprocess.Popen | None = None
        self._buffer = b""

    def _ensure_started(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                list(self._command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
            self._buffer = b""

    def request(self, message: dict, deadline: float) -> dict:
        self._ensure_started()
        proc = self._proc
        assert proc is not None and proc.stdin is not None and proc.stdout is not None
        line = json.dumps(message, ensure_ascii=False) + "\n"
        try:
            proc.stdin.write(line.encode("utf-8"))
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise HarnessCrashError(f"harness stdin closed: {exc}") from exc
        raw = self._read_line(proc.stdout.fileno(), deadline)
        try:
            response = json.loads(raw.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise HarnessCrashError(f"harness wrote a non-JSON line: {raw[:120]!r}") from exc
        if response.get("v") != HARNESS_PROTOCOL:
            raise HarnessProtocolError(
                f"expected protocol {HARNESS_PROTOCOL}, got {response.get('v')!r}"
            )
        return response

    def _read_line(self, fd: int, deadline: float) -> bytes:
        end = time.monotonic() + deadline
        while b"\n" not in self._buffer:
            remaining = end - time.monotonic()
            if remaining <= 0:
                raise HarnessCrashError("harness response deadline exceeded")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise HarnessCrashError("harness closed its stdout")
            self._buffer += chunk
        raw, self._buffer = self._buffer.split(b"\n", 1)
        return raw

    def close(self) -> None:
        proc = self._proc
        self._proc = None
        if proc is None:
            return
        try:
            if proc.stdin is not None:
                proc.stdin.close()
            proc.wait(timeout=2.0)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()


@dataclass
class _Pool:
    command: tuple[str, ...]
    size: int
    _idle: LifoQueue = field(default_factory=LifoQueue)
    _created: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def acquire(self) -> _HarnessClient:
        try:
            return self._idle.get_nowait()
        except Empty:
            pass
        with self._lock:
            if self._created < self.size:
                self._created += 1
                return _HarnessClient(self.command)
        return self._idle.get()

    def release(self, client: _HarnessClient) -> None:
        self._idle.put(client)

    def discard(self, client: _HarnessClient) -> None:
        client.close()
        with self._lock:
            self._created -= 1

    def close(self) -> None:
        while True:
            try:
                self._idle.get_nowait().close()
            except Empty:
                break


class HarnessExecutor(SubjectExecutor):
    """Executor backed by a pool of subject-harness worker processes.

    A crashed or protocol-breaking worker is discarded, replaced, and the
    request retried once before the failure surfaces as an infrastructure
    error (never as a subject-program EXCEPTION outcome).
    """

    def __init__(self, config: ExecutorConfig):
        super().__init__(config)
        self._pool = _Pool(command=config.harness_command, size=config.pool_size)

    def _request(self, message: dict, deadline: float) -> dict:
        last: HarnessCrashError | None = None
        for _ in range(2):
            client = self._pool.acquire()
            try:
                response = client.request(message, deadline)
            except HarnessCrashError as exc:
                self._pool.discard(client)
                last = exc
                continue
            except BaseException:
                self._pool.discard(client)
                raise
            self._pool.release(client)
            return response
        assert last is not None
        raise last

    def harness_check(self) -> str:
        """Handshake: normalize a trivial program, return the protocol id."""
        response = self._request(
            {"v": HARNESS_PROTOCOL, "op": "NORMALIZE", "source": "def f():\n    return 0"},
            deadline=_RESPONSE_GRACE,
        )
        if response.get("status") != "OK":
            raise HarnessProtocolError(f"handshake failed: {response.get('detail')!r}")
        return str(response["v"])

    def normalize(self, source: str) -> str:
        response = self._request(
            {"v": HARNESS_PROTOCOL, "op": "NORMALIZE", "source": source},
            deadline=_RESPONSE_GRACE,
        )
        status = response.get("status")
        if status == "OK":
            return response["payload"]["source"]
        if status == "SYNTAX_ERROR":
            raise NormalizationError(response.get("detail", "syntax error"))
        raise HarnessProtocolError(f"unexpected NORMALIZE status {status!r}")

    def validate_input(self, bindings_literal: str) -> InputExample:
        response = self._request(
            {"v": HARNESS_PROTOCOL, "op": "VALIDATE_INPUT", "bindings_literal": bindings_literal},
            deadline=_RESPONSE_GRACE,
        )
        status = response.get("status")
        if status == "OK":
            return InputExample(bindings=response["payload"]["bindings"])
        if status == "INPUT_ERROR":
            raise InputValidationError(response.get("detail", "invalid input literal"))
        raise HarnessProtocolError(f"unexpected VALIDATE_INPUT status {status!r}")

    def execute(self, program: SubjectProgram, input_example: InputExample, time_limit: float) -> ExecutionOutcome:
        message = {
            "v": HARNESS_PROTOCOL,
            "op": "RUN",
            "source": program.source_code,
            "entry_point": program.entry_point,
            "bindings_literal": render_bindings_literal(input_example.bindings),
            "time_limit": time_limit,
            "rng_seed": self.config.rng_seed,
        }
        response = self._request(message, deadline=time_limit + _RESPONSE_GRACE)
        status = response.get("status")
        if status == "OK":
            payload = response["payload"]
            kind = OutcomeKind(payload["kind"])
            if kind is OutcomeKind.VALUE:
                return ExecutionOutcome.value(payload["value_repr"], wall_time=payload["wall_time"])
            if kind is OutcomeKind.EXCEPTION:
                return ExecutionOutcome.exception(
                    payload["exception_type"],
                    message=payload.get("exception_message", ""),
                    wall_time=payload["wall_time"],
                )
            return ExecutionOutcome.timeout(payload["wall_time"])
        if status == "UNSERIALIZABLE":
            raise UnserializableResultError(response.get("detail", "unserializable return value"))
        if status == "INPUT_ERROR":
            raise InputValidationError(response.get("detail", "input rejected"))
        if status == "SYNTAX_ERROR":
            raise NormalizationError(response.get("detail", "syntax error"))
        raise HarnessProtocolError(f"unexpected RUN status {status!r}")

    def close(self) -> None:
        self._pool.close()
