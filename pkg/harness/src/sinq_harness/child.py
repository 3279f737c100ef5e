"""Per-run child process: executes one entry-point call and reports the
outcome as JSON.

Invoked as ``python -m sinq_harness.child JOB_FILE OUT_FILE`` in a fresh
interpreter (the server sets PYTHONHASHSEED in the environment, which only
takes effect at interpreter start). The bootstrap caps memory, blocks
socket creation, points the working directory at the scratch area, seeds
the RNG, and redirects the real stdout/stderr file descriptors to
/dev/null so subject prints cannot reach the protocol stream. Module
execution and the entry-point call both count as subject behaviour: any
exception from either becomes an EXCEPTION outcome.
"""

from __future__ import annotations

import json
import os
import sys
import time

from .canon import Unserializable, canonical_repr
from .inputs import validate_bindings_literal

MEM_CAP_ENV = "SINQ_HARNESS_MEM_MB"
DEFAULT_MEM_MB = 512


def _apply_limits() -> None:
    import resource

    mem_mb = int(os.environ.get(MEM_CAP_ENV, DEFAULT_MEM_MB))
    if mem_mb > 0:
        cap = mem_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (cap, cap))


def _block_network() -> None:
    import socket

    def refused(*args, **kwargs):
        raise OSError("network access is disabled inside subject runs")

    socket.socket = refused  # type: ignore[assignment]
    socket.create_connection = refused  # type: ignore[assignment]


def _silence_streams() -> None:
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    os.close(devnull)
    sys.stdout = open(os.devnull, "w")
    sys.stderr = open(os.devnull, "w")


def run_job(job: dict) -> dict:
    import random

    random.seed(job["rng_seed"])
    bindings = validate_bindings_literal(job["bindings_literal"])
    namespace: dict[str, object] = {"__name__": "subject"}
    started = time.perf_counter()
    try:
        exec(compile(job["source"], "<subject>", "exec"), namespace)
        entry = namespace[job["entry_point"]]
        result = entry(**bindings)  # type: ignore[operator]
    except BaseException as exc:  # noqa: BLE001 - subject behaviour, not ours
        wall = time.perf_counter() - started
        return {
            "kind": "EXCEPTION",
            "value_repr": None,
            "exception_type": type(exc).__name__,
            "exception_message": str(exc)[:500],
            "wall_time": wall,
        }
    wall = time.perf_counter() - started
    try:
        value_repr = canonical_repr(result)
    except Unserializable as exc:
        return {"kind": "UNSERIALIZABLE", "detail": str(exc), "wall_time": wall}
    except RecursionError:
        return {"kind": "UNSERIALIZABLE", "detail": "value too deep", "wall_time": wall}
    return {
        "kind": "VALUE",
        "value_repr": value_repr,
        "exception_type": None,
        "exception_message": "",
        "wall_time": wall,
    }


def main() -> int:
    job_path, out_path = sys.argv[1], sys.argv[2]
    with open(job_path, "r", encoding="utf-8") as fh:
        job = json.load(fh)
    # write through a pre-opened descriptor: the subject cannot retarget it
    out_fd = os.open(out_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    os.chdir(job["scratch_dir"])
    _apply_limits()
    _block_network()
    _silence_streams()
    outcome = run_job(job)
    payload = json.dumps(outcome, ensure_ascii=False).encode("utf-8")
    os.write(out_fd, payload)
    os.close(out_fd)
    return 0


if __name__ == "__main__":
    sys.exit(main())
