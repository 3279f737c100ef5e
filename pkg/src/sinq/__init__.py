"""Semantic inequivalence game engine.

A generator agent rewrites a source program into an inequivalent variant
and claims a diverging input; the claim is verified by differential
execution under randomized time limits; an evaluator agent is sampled to
score instance difficulty; accumulated records compile into biased SFT
chat datasets and intrinsic-evaluation reports.
"""

from .model import (
    ANY_DIFFICULTY,
    ChallengeInstance,
    ChatExample,
    ChatMessage,
    DifficultyEstimate,
    DivergenceVerdict,
    ExecutionOutcome,
    InputExample,
    OriginKind,
    OutcomeKind,
    ProgramOrigin,
    Role,
    SubjectProgram,
    Winner,
    canonical_equal,
    difficulty,
    difficulty_fraction,
    round_difficulty,
)
from .executor import ExecutorConfig, HarnessExecutor, SubjectExecutor, sample_time_limit
from .gateway import (
    AgentTranscript,
    ChatPrompt,
    HttpChatAgent,
    SampleBatch,
    SamplingParams,
    ScriptedAgent,
    TemplateSet,
    render_alice_prompt,
    render_bob_prompt,
    render_difficulty_prediction_turns,
    sample,
)
from .parser import (
    AliceArtifacts,
    BobArtifacts,
    ParseError,
    extract_first_code_fence,
    parse_alice_response,
    parse_bob_response,
)
from .engine import (
    Rejection,
    RejectionStage,
    RoundConfig,
    evaluate_with_bob,
    play_round,
    reestimate_difficulties,
    run_generation_round,
    verify_alice,
)
from .forge import (
    BiasPolicy,
    build_alice_sft_example,
    build_bob_sft_example,
    build_dataset,
    build_difficulty_prediction_example,
    emit_dataset,
    select_training_instances,
)
from .evalsuite import intrinsic_eval, round_statistics
from .oracle import InputSpaceSpec, OracleAgent, SearchResult, infer_input_space, search
from .store import BobSample, GameRecord, RecordStore, TranscriptLog

__version__ = "0.1.0"
