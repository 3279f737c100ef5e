"""Executor: time-limit sampling, divergence episode logic, and the wire
protocol client against a scripted stand-in worker process."""

from __future__ import annotations

import random
import statistics
import sys
import textwrap

import pytest

from sinq.executor import (
    ExecutorConfig,
    HarnessCrashError,
    HarnessExecutor,
    NormalizationError,
    sample_time_limit,
)
from sinq.model import ExecutionOutcome, InputExample
from sinq.testing import MockExecutor
from conftest import FIB_OUTCOMES, FIB_P, FIB_Q, program
from sinq.testing import outcome_table


class TestSampleTimeLimit:
    def test_draws_within_default_bounds(self):
        rng = random.Random(0)
        for _ in range(100):
            draw = sample_time_limit(rng, 2.5, 5.5)
            assert 2.5 <= draw <= 5.5

    def test_degenerate_interval(self):
        rng = random.Random(0)
        assert sample_time_limit(rng, 4.0, 4.0) == 4.0

    def test_mean_matches_analytic_value(self):
        # oracle: uniform mean (2.5 + 5.5) / 2 = 4.0
        rng = random.Random(1234)
        draws = [sample_time_limit(rng, 2.5, 5.5) for _ in range(10_000)]
        assert 3.9 <= statistics.fmean(draws) <= 4.1

    def test_deterministic_given_seed(self):
        a = [sample_time_limit(random.Random(42), 2.5, 5.5) for _ in range(5)]
        b = [sample_time_limit(random.Random(42), 2.5, 5.5) for _ in range(5)]
        assert a == b

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            sample_time_limit(random.Random(0), 0.0, 1.0)
        with pytest.raises(ValueError):
            sample_time_limit(random.Random(0), 2.0, 1.0)


class TestExecutorConfig:
    def test_defaults(self):
        config = ExecutorConfig()
        assert (config.limit_low, config.limit_high) == (2.5, 5.5)
        assert config.stability_checks == 1
        assert config.shared_limit is True

    def test_validation(self):
        with pytest.raises(ValueError):
            ExecutorConfig(limit_low=6.0, limit_high=5.0)


class TestCheckDivergence:
    def test_fib_pair_diverges(self, mock_executor, fib_p, fib_q):
        verdict = mock_executor.check_divergence(fib_p, fib_q, InputExample({"n": -1}))
        assert verdict.divergent is True
        assert verdict.stability_confirmed is True
        assert verdict.outcome_p.value_repr == "0"
        assert verdict.outcome_q.exception_type == "RecursionError"
        assert 2.5 <= verdict.time_limit <= 5.5
        assert verdict.episodes == 2  # initial episode + one stability re-run

    def test_program_never_diverges_from_itself(self, mock_executor, fib_p):
        verdict = mock_executor.check_divergence(fib_p, fib_p, InputExample({"n": -1}))
        assert verdict.divergent is False
        assert verdict.stability_confirmed is False
        assert verdict.episodes == 1

    def test_modulo_pair_value_divergence(self):
        # derived by hand: 3 % 3 = 0 and 3 % 4 = 3
        p = program("def f(x):\n    return x % 3", entry_point="f")
        q = program("def f(x):\n    return x % 4", entry_point="f")
        table = {
            ("def f(x):\n    return x % 3", "{'x': 3}"): ExecutionOutcome.value("0"),
            ("def f(x):\n    return x % 4", "{'x': 3}"): ExecutionOutcome.value("3"),
        }
        executor = MockExecutor(outcome_table(table))
        verdict = executor.check_divergence(p, q, InputExample({"x": 3}))
        assert verdict.divergent is True
        assert verdict.outcome_p.value_repr == "0"
        assert verdict.outcome_q.value_repr == "3"

    def test_unstable_divergence_reported_not_divergent(self, fib_p, fib_q):
        flips = iter([ExecutionOutcome.value("0"), ExecutionOutcome.exception("RecursionError"),
                      ExecutionOutcome.value("0"), ExecutionOutcome.value("0")])

        def flaky(prog, input_example, limit):
            if prog.source_code == FIB_P:
                return ExecutionOutcome.value("0")
            return next(flips) if prog.source_code == FIB_Q else ExecutionOutcome.value("0")

        # Q first differs (RecursionError drawn second) then agrees
        executor = MockExecutor(flaky, config=ExecutorConfig(stability_checks=1))
        next(flips)  # align iterator: first Q outcome is the exception
        verdict = executor.check_divergence(fib_p, fib_q, InputExample({"n": -1}))
        assert verdict.divergent is False
        assert verdict.stability_confirmed is False
        assert verdict.episodes == 2

    def test_zero_stability_checks_confirms_vacuously(self, fib_p, fib_q):
        executor = MockExecutor(
            outcome_table(FIB_OUTCOMES), config=ExecutorConfig(stability_checks=0)
        )
        verdict = executor.check_divergence(fib_p, fib_q, InputExample({"n": -1}))
        assert verdict.divergent is True
        assert verdict.stability_confirmed is True
        assert verdict.episodes == 1

    def test_independent_limits_when_sharing_disabled(self, fib_p, fib_q):
        seen: list[float] = []

        def recording(prog, input_example, limit):
            seen.append(limit)
            return FIB_OUTCOMES[(prog.source_code, "{'n': -1}")]

        executor = MockExecutor(
            recording, config=ExecutorConfig(stability_checks=0, shared_limit=False, rng_seed=1)
        )
        verdict = executor.check_divergence(fib_p, fib_q, InputExample({"n": -1}))
        assert len(seen) == 2
        assert seen[0] != seen[1]  # each program drew its own limit
        assert verdict.time_limit == seen[0]  # the verdict records P's draw

    def test_shared_limit_within_episode(self, fib_p, fib_q):
        seen: list[tuple[str, float]] = []

        def recording(prog, input_example, limit):
            seen.append((prog.entry_point, limit))
            return FIB_OUTCOMES[(prog.source_code, "{'n': -1}")]

        executor = MockExecutor(recording, config=ExecutorConfig(stability_checks=3))
        executor.check_divergence(fib_p, fib_q, InputExample({"n": -1}))
        limits = [limit for _, limit in seen]
        assert len(limits) == 8  # 4 episodes x 2 programs
        episode_pairs = [(limits[i], limits[i + 1]) for i in range(0, len(limits), 2)]
        for limit_p, limit_q in episode_pairs:
            assert limit_p == limit_q
        # re-sampled across episodes
        assert len({pair[0] for pair in episode_pairs}) > 1


# A scripted worker that speaks the harness line protocol, standing in for
# the real worker so the transport layer is testable on its own.
STUB_OK = textwrap.dedent(
    """
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        if req["op"] == "NORMALIZE":
            if "def f(:" in req.get("source", ""):
                resp = {"v": "sinq_harness_v1", "status": "SYNTAX_ERROR", "payload": None,
                        "detail": "invalid syntax"}
            else:
                resp = {"v": "sinq_harness_v1", "status": "OK",
                        "payload": {"source": req["source"]}, "detail": ""}
        elif req["op"] == "RUN":
            resp = {"v": "sinq_harness_v1", "status": "OK",
                    "payload": {"kind": "VALUE", "value_repr": "5", "exception_type": None,
                                "exception_message": "", "wall_time": 0.01},
                    "detail": ""}
        else:
            resp = {"v": "sinq_harness_v1", "status": "OK",
                    "payload": {"bindings": {"x": 5}}, "detail": ""}
        sys.stdout.write(json.dumps(resp) + "\\n")
        sys.stdout.flush()
    """
)

STUB_CRASH_ONCE = textwrap.dedent(
    """
    import json, os, sys
    marker = sys.argv[1]
    first = not os.path.exists(marker)
    if first:
        open(marker, "w").write("x")
    for line in sys.stdin:
        if first:
            sys.exit(1)
        req = json.loads(line)
        resp = {"v": "sinq_harness_v1", "status": "OK",
                "payload": {"source": req["source"]}, "detail": ""}
        sys.stdout.write(json.dumps(resp) + "\\n")
        sys.stdout.flush()
    """
)


def _stub_executor(code: str, *args: str, **config_kwargs) -> HarnessExecutor:
    command = (sys.executable, "-c", code, *args)
    return HarnessExecutor(ExecutorConfig(harness_command=command, **config_kwargs))


class TestHarnessClient:
    def test_normalize_round_trip(self):
        with _stub_executor(STUB_OK) as executor:
            assert executor.normalize("def f(x):\n    return x") == "def f(x):\n    return x"

    def test_syntax_error_surfaces(self):
        with _stub_executor(STUB_OK) as executor:
            with pytest.raises(NormalizationError, match="invalid syntax"):
                executor.normalize("def f(:")

    def test_run_outcome_decoding(self):
        with _stub_executor(STUB_OK) as executor:
            outcome = executor.execute(
                program("def f(x):\n    return x", entry_point="f"), InputExample({"x": 5}), 1.0
            )
            assert outcome.value_repr == "5"

    def test_validate_input_decoding(self):
        with _stub_executor(STUB_OK) as executor:
            example = executor.validate_input("{'x': 5}")
            assert example.bindings == {"x": 5}

    def test_harness_check_handshake(self):
        with _stub_executor(STUB_OK) as executor:
            assert executor.harness_check() == "sinq_harness_v1"

    def test_crashed_worker_replaced_transparently(self, tmp_path):
        marker = tmp_path / "crashed-once"
        with _stub_executor(STUB_CRASH_ONCE, str(marker)) as executor:
            # first worker exits immediately; the retry gets a fresh one
            assert executor.normalize("def f(x):\n    return x") == "def f(x):\n    return x"

    def test_persistent_crash_raises(self):
        with _stub_executor("import sys; sys.exit(1)") as executor:
            with pytest.raises(HarnessCrashError):
                executor.normalize("def f(x):\n    return x")
