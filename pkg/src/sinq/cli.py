"""Operator entry point.

Exit codes: 0 success, 1 domain failure (nothing verified, no diverging
input found, transport exhausted), 2 usage or configuration error. Every
subcommand accepts --json for machine-readable output and --seed for
end-to-end determinism with scripted agents.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import engine as engine_mod
from .config import (
    ConfigError,
    executor_config_from,
    load_agent,
    load_config,
    sampling_from,
    templates_from_config,
)
from .engine import RoundConfig, play_round, reestimate_difficulties, run_generation_round
from .evalsuite import intrinsic_eval, round_statistics
from .executor import ExecutorError, HarnessExecutor
from .forge import (
    PURPOSE_ALICE,
    PURPOSE_BOB,
    PURPOSE_DIFF,
    BiasPolicy,
    ForgeError,
    build_dataset,
    emit_dataset,
)
from .gateway import AuthenticationError, GatewayError
from .model import ANY_DIFFICULTY, OriginKind, ProgramOrigin, SubjectProgram
from .oracle import DEFAULT_BUDGET, SpecError, infer_input_space, search, space_from_dict
from .store import RecordStore, StoreError, TranscriptLog
from .subjects import (
    LiteralError,
    SubjectSourceError,
    last_top_level_function,
    load_dataset,
)

logger = logging.getLogger(__name__)

_PURPOSES = {"alice": PURPOSE_ALICE, "diff": PURPOSE_DIFF, "bob": PURPOSE_BOB}


class DomainFailure(RuntimeError):
    """Subcommand ran but the domain outcome is a failure (exit 1)."""


def _emit(args: argparse.Namespace, result: dict, human_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(result, ensure_ascii=False))
    else:
        for line in human_lines:
            print(line)


def _target(value: str) -> object:
    if value.lower() == "any":
        return ANY_DIFFICULTY
    level = int(value)
    if not 0 <= level <= 10:
        raise argparse.ArgumentTypeError("target difficulty must be 0..10 or 'any'")
    return level


def _load_program(path: str, entry_point: str | None) -> SubjectProgram:
    source = Path(path).read_text(encoding="utf-8")
    entry = entry_point or last_top_level_function(source)
    return SubjectProgram(
        source_code=source,
        entry_point=entry,
        origin=ProgramOrigin(OriginKind.DATASET, str(path)),
    )


def _round_config(args: argparse.Namespace, config: dict, target=None) -> RoundConfig:
    executor_config = executor_config_from(config, seed=args.seed, jobs=getattr(args, "jobs", None))
    section = config.get("round", {})
    kwargs = {
        "executor": executor_config,
        "sampling": sampling_from(config),
        "bob_samples": section.get("bob_samples", 10),
        "alice_samples": section.get("alice_samples", 10),
        "target_difficulty": section.get("target_difficulty", 10),
    }
    if target is not None:
        kwargs["target_difficulty"] = target
    return RoundConfig(**kwargs)


def cmd_play(args: argparse.Namespace, config: dict) -> dict:
    templates = templates_from_config(config)
    alice = load_agent(args.alice, config, templates, "alice")
    bob = load_agent(args.bob, config, templates, "bob")
    round_config = _round_config(args, config, target=args.target_difficulty)
    program = _load_program(args.program, args.entry_point)
    store = RecordStore(args.store) if args.store else None
    log = TranscriptLog.beside(args.store) if args.store else None
    with HarnessExecutor(round_config.executor) as executor:
        program = SubjectProgram(
            source_code=executor.normalize(program.source_code),
            entry_point=program.entry_point,
            origin=program.origin,
        )
        records, stats = play_round(
            program,
            alice,
            bob,
            round_config,
            executor,
            store=store,
            templates=templates,
            transcript_log=log,
            round_label=args.round_label,
        )
    result = {
        "records": [
            {
                "record_id": r.record_id,
                "difficulty": r.instance.difficulty.difficulty if r.instance.difficulty else None,
                "winner": r.winner.value,
            }
            for r in records
        ],
        "valid": stats.valid,
        "rejections": dict(stats.rejections),
    }
    lines = [f"verified instances: {stats.valid} of {stats.alice_received} generator samples"]
    for record in records:
        d = record.instance.difficulty
        lines.append(
            f"  {record.record_id}  difficulty={d.difficulty if d else '?'}  winner={record.winner.value}"
        )
    for stage, count in sorted(stats.rejections.items()):
        lines.append(f"  rejected[{stage}] = {count}")
    if not records:
        raise DomainFailure("no generator sample verified")
    return {"result": result, "lines": lines}


def cmd_round(args: argparse.Namespace, config: dict) -> dict:
    templates = templates_from_config(config)
    rows = load_dataset(args.dataset)
    round_config = _round_config(args, config, target=args.target_difficulty)
    if args.dry_run:
        rendered = []
        for row in rows:
            program = SubjectProgram(
                source_code=row.code,
                entry_point=row.entry_point,
                origin=ProgramOrigin(OriginKind.DATASET, row.task_id),
            )
            prompt = templates.render_alice_prompt(program, round_config.target_difficulty)
            rendered.append({"task_id": row.task_id, "prompt_digest": prompt.digest()})
        return {
            "result": {"dry_run": True, "programs": len(rows), "prompts": rendered},
            "lines": [f"dry run: rendered {len(rows)} generator prompts, no execution"],
        }
    alice = load_agent(args.alice, config, templates, "alice")
    bob = load_agent(args.bob, config, templates, "bob")
    store = RecordStore(args.out)
    log = TranscriptLog.beside(args.out)
    # the CLI owns the concurrency budget: worker threads are bounded by
    # both --jobs and the in-flight request cap (one request per worker)
    jobs = max(1, args.jobs)
    if args.max_concurrent_requests:
        jobs = min(jobs, args.max_concurrent_requests)
    with HarnessExecutor(round_config.executor) as executor:
        summary = run_generation_round(
            rows,
            alice,
            bob,
            round_config,
            executor,
            store,
            templates=templates,
            transcript_log=log,
            round_label=args.round_label,
            jobs=jobs,
        )
    result = {
        "round": summary.round_label,
        "programs_total": summary.programs_total,
        "programs_played": summary.programs_played,
        "programs_skipped_resume": summary.programs_skipped_resume,
        "programs_failed": summary.programs_failed,
        "records": summary.records,
        "mean_difficulty": summary.mean_difficulty,
        "std_difficulty": summary.std_difficulty,
        "fraction_at_max": summary.fraction_at_max,
        "rejections": dict(summary.stats.rejections),
        "failures": summary.failures,
    }
    lines = [
        f"round {summary.round_label}: {summary.records} records from "
        f"{summary.programs_played}/{summary.programs_total} programs "
        f"(skipped {summary.programs_skipped_resume} already played, {summary.programs_failed} failed)",
    ]
    if summary.mean_difficulty is not None:
        lines.append(
            f"difficulty mean={summary.mean_difficulty:.3f} std={summary.std_difficulty:.3f} "
            f"at_max={summary.fraction_at_max:.3f}"
        )
    for failure in summary.failures:
        lines.append(f"  failed: {failure}")
    if summary.programs_total and summary.programs_played == 0 and summary.programs_failed > 0:
        raise DomainFailure("every program failed; see aggregated errors")
    return {"result": result, "lines": lines}


def cmd_reestimate(args: argparse.Namespace, config: dict) -> dict:
    templates = templates_from_config(config)
    bob = load_agent(args.bob, config, templates, "bob")
    store = RecordStore(args.store)
    executor_config = executor_config_from(config, seed=args.seed)
    with HarnessExecutor(executor_config) as executor:
        updated = reestimate_difficulties(
            store,
            bob,
            args.n,
            executor,
            sampling=sampling_from(config),
            templates=templates,
            transcript_log=TranscriptLog.beside(args.store),
        )
    difficulties = [r.instance.difficulty.difficulty for r in updated if r.instance.difficulty]
    result = {"records": len(updated), "difficulties": difficulties}
    return {"result": result, "lines": [f"re-estimated {len(updated)} records"]}


def cmd_build_sft(args: argparse.Namespace, config: dict) -> dict:
    templates = templates_from_config(config)
    store = RecordStore(args.store)
    records = store.load()
    policy_section = config.get("bias", {})
    policy = BiasPolicy(
        hard_threshold=policy_section.get("hard_threshold", 5.0),
        easy_fraction_alice=policy_section.get("easy_fraction_alice", 0.20),
        easy_fraction_diff=policy_section.get("easy_fraction_diff", 0.50),
        per_round=policy_section.get("per_round", False),
    )
    rng = random.Random(args.seed if args.seed is not None else 0)
    build = build_dataset(records, _PURPOSES[args.purpose], policy, rng, templates)
    manifest = emit_dataset(build, args.out, overwrite=args.overwrite)
    lines = [f"wrote {manifest['examples']} examples to {args.out}"]
    if manifest["examples"] == 0:
        lines.append("warning: empty selection")
    return {"result": manifest, "lines": lines}


def cmd_oracle(args: argparse.Namespace, config: dict) -> dict:
    program_p = _load_program(args.p, args.entry_point)
    program_q = _load_program(args.q, args.entry_point or program_p.entry_point)
    executor_config = executor_config_from(config, seed=args.seed)
    with HarnessExecutor(executor_config) as executor:
        program_p = SubjectProgram(
            executor.normalize(program_p.source_code), program_p.entry_point, program_p.origin
        )
        program_q = SubjectProgram(
            executor.normalize(program_q.source_code), program_p.entry_point, program_q.origin
        )
        if args.space:
            raw = args.space
            if raw.startswith("@"):
                raw = Path(raw[1:]).read_text(encoding="utf-8")
            space = space_from_dict(json.loads(raw), budget=args.budget, seed=args.seed or 0)
        else:
            space = infer_input_space(program_p, budget=args.budget, seed=args.seed or 0)
        outcome = search(program_p, program_q, space, executor)
    if outcome.found is None:
        result = {"found": None, "evaluations": outcome.evaluations, "skipped": outcome.skipped}
        _emit(args, result, [f"no diverging input within budget ({outcome.evaluations} evaluations)"])
        raise DomainFailure("no diverging input found")
    result = {
        "found": outcome.found.bindings,
        "evaluations": outcome.evaluations,
        "skipped": outcome.skipped,
    }
    from .subjects import render_bindings_literal

    lines = [f"diverging input: {render_bindings_literal(outcome.found.bindings)}"]
    return {"result": result, "lines": lines}


def cmd_eval(args: argparse.Namespace, config: dict) -> dict:
    templates = templates_from_config(config)
    bob = load_agent(args.bob, config, templates, "bob")
    store = RecordStore(args.store)
    instances = [r.instance for r in store.load()]
    executor_config = executor_config_from(config, seed=args.seed)
    with HarnessExecutor(executor_config) as executor:
        report = intrinsic_eval(
            instances,
            bob,
            args.n,
            executor,
            sampling=sampling_from(config),
            templates=templates,
        )
    data = report.to_dict()
    Path(args.out).write_text(json.dumps(data, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    any_rate = "undefined" if report.solve_rate_any is None else f"{100 * report.solve_rate_any:.2f}%"
    strict = "undefined" if report.solve_rate_strict is None else f"{100 * report.solve_rate_strict:.2f}%"
    lines = [f"solved {report.solved}/{report.total} (any-of-{args.n}: {any_rate}, strict: {strict})"]
    return {"result": data, "lines": lines}


def cmd_report(args: argparse.Namespace, config: dict) -> dict:
    store = RecordStore(args.store)
    stats = round_statistics(store.load())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "round_stats.csv").write_text(stats.to_csv(), encoding="utf-8")
    (out_dir / "round_stats.json").write_text(
        json.dumps(stats.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    charts = _write_charts(stats, out_dir)
    result = {**stats.to_dict(), "files": ["round_stats.csv", "round_stats.json", *charts]}
    return {"result": result, "lines": [f"wrote round statistics for {len(stats.rows)} rounds to {out_dir}"]}


def _write_charts(stats, out_dir: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not stats.rows:
        return []
    labels = [row.round_label for row in stats.rows]
    means = [row.mean_difficulty for row in stats.rows]
    stds = [row.std_difficulty for row in stats.rows]
    at_max = [row.fraction_at_max for row in stats.rows]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(range(len(labels)), means, yerr=stds, marker="o", capsize=3)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("difficulty")
    ax.set_title("mean instance difficulty per round")
    fig.tight_layout()
    fig.savefig(out_dir / "difficulty_mean.png")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(labels)), at_max, marker="s")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("fraction at difficulty 10")
    ax.set_title("fraction of instances at maximum difficulty")
    fig.tight_layout()
    fig.savefig(out_dir / "fraction_at_max.png")
    plt.close(fig)
    return ["difficulty_mean.png", "fraction_at_max.png"]


def cmd_harness_check(args: argparse.Namespace, config: dict) -> dict:
    executor_config = executor_config_from(config, seed=args.seed)
    with HarnessExecutor(executor_config) as executor:
        version = executor.harness_check()
    return {
        "result": {"protocol": version, "command": list(executor_config.harness_command)},
        "lines": [f"harness OK, protocol {version}"],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinq", description=__doc__)
    parser.add_argument("--config", default=None, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="deterministic seed")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("play", help="one round on one program")
    p.add_argument("--program", required=True)
    p.add_argument("--alice", required=True, help="agent config file or section name")
    p.add_argument("--bob", required=True, help="agent config file or section name")
    p.add_argument("--entry-point", default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--target-difficulty", type=_target, default=None)
    p.add_argument("--round-label", default="round-0")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("round", help="full generation round over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="record store (JSONL)")
    p.add_argument("--alice", default="alice")
    p.add_argument("--bob", default="bob")
    p.add_argument("--target-difficulty", type=_target, default=None)
    p.add_argument("--round-label", default="round-0")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--max-concurrent-requests", type=int, default=None)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("reestimate", help="re-score stored instances with a new evaluator")
    p.add_argument("--store", required=True)
    p.add_argument("--bob", required=True)
    p.add_argument("-n", type=int, default=10)
    p.set_defaults(func=cmd_reestimate)

    p = sub.add_parser("build-sft", help="emit a chat JSONL training file")
    p.add_argument("--store", required=True)
    p.add_argument("--purpose", choices=sorted(_PURPOSES), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_build_sft)

    p = sub.add_parser("oracle", help="brute-force diverging-input search")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--entry-point", default=None)
    p.add_argument("--space", default=None, help="JSON space spec or @file")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="intrinsic solve-rate evaluation")
    p.add_argument("--store", required=True)
    p.add_argument("--bob", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="round statistics tables and charts")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("harness-check", help="verify the worker handshake")
    p.set_defaults(func=cmd_harness_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = load_config(args.config) if args.config else {}
        outcome = args.func(args, config)
    except (ConfigError, SubjectSourceError, LiteralError, SpecError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    except AuthenticationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GatewayError, ExecutorError, StoreError, ForgeError, engine_mod.EngineError, FileExistsError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    _emit(args, outcome["result"], outcome["lines"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
