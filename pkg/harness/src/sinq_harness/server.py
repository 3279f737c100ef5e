"""The worker's serve loop: one JSON request per line in, one JSON
response per line out.

Every RUN spawns a fresh child interpreter (see child.py), so a timeout
kills only that child and no interpreter state survives between runs. The
loop itself is single-threaded; a malformed request line produces an
INPUT_ERROR response and the loop continues. Clean EOF exits 0.
"""

from __future__ import annotations

import ast
import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time

from . import PROTOCOL_VERSION
from .inputs import InputError, check_bindings_against_entry, validate_bindings_literal
from .normalize import NormalizeError, normalize, parse_check

#: Child interpreters beyond this grace period after the limit are assumed
#: wedged in interpreter start; the run is reported as TIMEOUT either way.
_SPAWN_GRACE = 10.0


def _response(status: str, payload: object = None, detail: str = "") -> dict:
    return {"v": PROTOCOL_VERSION, "status": status, "payload": payload, "detail": detail}


def _entry_parameters(source: str, entry_point: str) -> tuple[list[str], bool] | None:
    tree = parse_check(source)
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == entry_point:
            args = node.args
            names = [a.arg for a in (*args.posonlyargs, *args.args, *args.kwonlyargs)]
            return names, args.kwarg is not None
    return None


def handle_normalize(request: dict) -> dict:
    try:
        return _response("OK", {"source": normalize(request["source"])})
    except NormalizeError as exc:
        return _response("SYNTAX_ERROR", detail=str(exc))


def handle_validate_input(request: dict) -> dict:
    try:
        bindings = validate_bindings_literal(request["bindings_literal"])
    except InputError as exc:
        return _response("INPUT_ERROR", detail=str(exc))
    return _response("OK", {"bindings": bindings})


def _run_child(job: dict, time_limit: float) -> tuple[dict | None, int | None]:
    """Spawn a child for one run. Returns (outcome, returncode); outcome is
    None on timeout (child killed) or when the child died without a report."""
    scratch = tempfile.mkdtemp(prefix="sinq-run-")
    job_path = os.path.join(scratch, "job.json")
    out_path = os.path.join(scratch, "outcome.json")
    job = {**job, "scratch_dir": scratch}
    try:
        with open(job_path, "w", encoding="utf-8") as fh:
            json.dump(job, fh, ensure_ascii=False)
        env = {**os.environ, "PYTHONHASHSEED": "0"}
        proc = subprocess.Popen(
            [sys.executable, "-m", "sinq_harness.child", job_path, out_path],
            stdin=subprocess.DEVNULL,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
            env=env,
            start_new_session=True,
        )
        try:
            proc.wait(timeout=time_limit)
        except subprocess.TimeoutExpired:
            _kill_tree(proc)
            return None, None
        try:
            with open(out_path, "r", encoding="utf-8") as fh:
                return json.load(fh), proc.returncode
        except (OSError, json.JSONDecodeError):
            return None, proc.returncode
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
    deadline = time.monotonic() + _SPAWN_GRACE
    while proc.poll() is None and time.monotonic() < deadline:
        time.sleep(0.01)


def handle_run(request: dict) -> dict:
    source = request["source"]
    entry_point = request["entry_point"]
    time_limit = float(request["time_limit"])
    if time_limit <= 0:
        return _response("INPUT_ERROR", detail="time_limit must be positive")
    try:
        entry = _entry_parameters(source, entry_point)
    except NormalizeError as exc:
        return _response("SYNTAX_ERROR", detail=str(exc))
    if entry is None:
        return _response("INPUT_ERROR", detail=f"entry point {entry_point!r} not defined at top level")
    try:
        bindings = validate_bindings_literal(request["bindings_literal"])
        check_bindings_against_entry(bindings, entry[0], entry[1])
    except InputError as exc:
        return _response("INPUT_ERROR", detail=str(exc))

    job = {
        "source": source,
        "entry_point": entry_point,
        "bindings_literal": request["bindings_literal"],
        "rng_seed": int(request.get("rng_seed", 0)),
    }
    outcome, returncode = _run_child(job, time_limit)
    if outcome is None and returncode is None:
        return _response(
            "OK",
            {
                "kind": "TIMEOUT",
                "value_repr": None,
                "exception_type": None,
                "exception_message": "",
                "wall_time": time_limit,
            },
        )
    if outcome is None:
        # the child died without reporting (subject killed its process or
        # crashed the interpreter); equality still works via the type name
        label = f"ChildExit:{returncode}"
        return _response(
            "OK",
            {
                "kind": "EXCEPTION",
                "value_repr": None,
                "exception_type": label,
                "exception_message": "subject process ended without a result",
                "wall_time": time_limit,
            },
        )
    if outcome["kind"] == "UNSERIALIZABLE":
        return _response("UNSERIALIZABLE", detail=outcome.get("detail", ""))
    outcome["wall_time"] = min(float(outcome.get("wall_time", 0.0)), time_limit)
    return _response("OK", outcome)


_HANDLERS = {
    "NORMALIZE": handle_normalize,
    "VALIDATE_INPUT": handle_validate_input,
    "RUN": handle_run,
}


def handle_line(line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return _response("INPUT_ERROR", detail=f"malformed request line: {exc}")
    if not isinstance(request, dict):
        return _response("INPUT_ERROR", detail="request must be a JSON object")
    version = request.get("v", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        return _response("INPUT_ERROR", detail=f"unsupported protocol version {version!r}")
    handler = _HANDLERS.get(request.get("op"))
    if handler is None:
        return _response("INPUT_ERROR", detail=f"unknown op {request.get('op')!r}")
    try:
        return handler(request)
    except KeyError as exc:
        return _response("INPUT_ERROR", detail=f"missing field {exc}")
    except (TypeError, ValueError) as exc:
        return _response("INPUT_ERROR", detail=f"malformed field: {exc}")


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        response = handle_line(line)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
    return 0


def main() -> int:
    return serve()


if __name__ == "__main__":
    sys.exit(main())
