"""Core model: outcome equality, difficulty arithmetic, chat invariants."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sinq.model import (
    ChatExample,
    ChatMessage,
    DifficultyEstimate,
    DivergenceVerdict,
    ExecutionOutcome,
    OutcomeKind,
    Role,
    canonical_equal,
    difficulty,
    difficulty_fraction,
    round_difficulty,
)


def outcomes_strategy():
    values = st.builds(ExecutionOutcome.value, st.sampled_from(["0", "1", "'x'", "[1, 2]", "None"]))
    exceptions = st.builds(
        ExecutionOutcome.exception,
        st.sampled_from(["ValueError", "RecursionError", "TypeError"]),
        st.text(max_size=8),
    )
    timeouts = st.builds(ExecutionOutcome.timeout, st.floats(min_value=0.1, max_value=5.0))
    return st.one_of(values, exceptions, timeouts)


class TestCanonicalEqual:
    def test_value_vs_timeout_unequal(self):
        # P returning 0 while Q exceeds the limit: the motivating divergence
        assert canonical_equal(ExecutionOutcome.value("0"), ExecutionOutcome.timeout(4.0)) is False

    def test_identical_values_equal(self):
        assert canonical_equal(ExecutionOutcome.value("7"), ExecutionOutcome.value("7")) is True

    def test_exception_messages_never_compared(self):
        a = ExecutionOutcome.exception("RecursionError", "maximum recursion depth exceeded")
        b = ExecutionOutcome.exception("RecursionError", "maximum recursion depth exceeded in comparison")
        assert canonical_equal(a, b) is True

    def test_exception_types_compared(self):
        a = ExecutionOutcome.exception("ValueError")
        b = ExecutionOutcome.exception("TypeError")
        assert canonical_equal(a, b) is False

    def test_distinct_values_unequal(self):
        assert canonical_equal(ExecutionOutcome.value("0"), ExecutionOutcome.value("1")) is False

    def test_timeouts_equal_regardless_of_limit(self):
        assert canonical_equal(ExecutionOutcome.timeout(2.5), ExecutionOutcome.timeout(5.5)) is True

    @given(a=outcomes_strategy())
    def test_reflexive(self, a):
        assert canonical_equal(a, a)

    @given(a=outcomes_strategy(), b=outcomes_strategy())
    def test_symmetric(self, a, b):
        assert canonical_equal(a, b) == canonical_equal(b, a)

    @given(a=outcomes_strategy(), b=outcomes_strategy(), c=outcomes_strategy())
    def test_transitive(self, a, b, c):
        if canonical_equal(a, b) and canonical_equal(b, c):
            assert canonical_equal(a, c)

    @given(a=outcomes_strategy(), b=outcomes_strategy())
    def test_cross_kind_always_unequal(self, a, b):
        if a.kind is not b.kind:
            assert canonical_equal(a, b) is False


class TestDifficulty:
    def test_paper_worked_value(self):
        # solved 40% of the time -> difficulty 6
        assert difficulty(4, 10) == 6.0

    def test_fully_solved(self):
        assert difficulty(10, 10) == 0.0

    def test_never_solved(self):
        assert difficulty(0, 10) == 10.0

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            difficulty(0, 0)

    def test_rejects_out_of_range_correct(self):
        with pytest.raises(ValueError):
            difficulty(11, 10)
        with pytest.raises(ValueError):
            difficulty(-1, 10)

    @given(n=st.integers(min_value=1, max_value=500), data=st.data())
    def test_complement_sums_to_ten_exactly(self, n, data):
        c = data.draw(st.integers(min_value=0, max_value=n))
        assert difficulty_fraction(c, n) + difficulty_fraction(n - c, n) == Fraction(10)

    @given(n=st.integers(min_value=1, max_value=500), data=st.data())
    def test_float_derived_from_exact_rational(self, n, data):
        c = data.draw(st.integers(min_value=0, max_value=n))
        assert difficulty(c, n) == float(difficulty_fraction(c, n))


class TestRoundDifficulty:
    def test_integral_passthrough(self):
        assert round_difficulty(6.0) == 6

    def test_nearest(self):
        assert round_difficulty(6.4) == 6

    def test_tie_rounds_away_from_zero(self):
        assert round_difficulty(7.5) == 8

    def test_exhaustive_tenths_against_direct_oracle(self):
        # oracle: exact rational rounding, half away from zero
        for k in range(0, 101):
            d = k / 10
            exact = Fraction(k, 10)
            floor = exact.numerator // exact.denominator
            oracle = floor + (1 if exact - floor >= Fraction(1, 2) else 0)
            assert round_difficulty(d) == oracle, f"d={d}"

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            round_difficulty(-0.1)
        with pytest.raises(ValueError):
            round_difficulty(10.1)

    @given(d=st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    def test_within_half_of_input(self, d):
        assert abs(round_difficulty(d) - d) <= 0.5


class TestDifficultyEstimate:
    def test_requires_consistent_derived_value(self):
        with pytest.raises(ValueError):
            DifficultyEstimate(n_samples=10, n_correct=4, difficulty=5.9)

    def test_from_counts(self):
        estimate = DifficultyEstimate.from_counts(4, 10)
        assert estimate.difficulty == 6.0
        assert estimate.exact == Fraction(6)


class TestOutcomeShape:
    def test_value_requires_value_repr(self):
        with pytest.raises(ValueError):
            ExecutionOutcome(OutcomeKind.VALUE)

    def test_exception_requires_type(self):
        with pytest.raises(ValueError):
            ExecutionOutcome(OutcomeKind.EXCEPTION)

    def test_timeout_carries_nothing(self):
        with pytest.raises(ValueError):
            ExecutionOutcome(OutcomeKind.TIMEOUT, value_repr="1")


class TestDivergenceVerdict:
    def test_flag_must_match_outcomes(self):
        a = ExecutionOutcome.value("0")
        b = ExecutionOutcome.value("0")
        with pytest.raises(ValueError):
            DivergenceVerdict(True, a, b, 4.0, stability_confirmed=True)

    def test_consistent_verdict(self):
        a = ExecutionOutcome.value("0")
        b = ExecutionOutcome.timeout(4.0)
        v = DivergenceVerdict(True, a, b, 4.0, stability_confirmed=True)
        assert v.divergent


class TestChatExample:
    def test_needs_a_weighted_message(self):
        with pytest.raises(ValueError):
            ChatExample(messages=(ChatMessage(Role.SYSTEM, "s"), ChatMessage(Role.USER, "u")))

    def test_weight_only_on_assistant(self):
        with pytest.raises(ValueError):
            ChatMessage(Role.USER, "u", weight=1)

    def test_difficulty_prediction_weights_final_assistant_only(self):
        good = ChatExample(
            messages=(
                ChatMessage(Role.SYSTEM, "s"),
                ChatMessage(Role.USER, "u"),
                ChatMessage(Role.ASSISTANT, "a1", weight=0),
                ChatMessage(Role.USER, "u2"),
                ChatMessage(Role.ASSISTANT, "a2", weight=1),
            ),
            tags=frozenset({"difficulty-prediction"}),
        )
        assert good.messages[-1].weight == 1
        with pytest.raises(ValueError):
            ChatExample(
                messages=(
                    ChatMessage(Role.SYSTEM, "s"),
                    ChatMessage(Role.USER, "u"),
                    ChatMessage(Role.ASSISTANT, "a1", weight=1),
                    ChatMessage(Role.USER, "u2"),
                    ChatMessage(Role.ASSISTANT, "a2", weight=1),
                ),
                tags=frozenset({"difficulty-prediction"}),
            )
