"""Standalone worker process for running untrusted subject programs.

Speaks line-delimited JSON on stdin/stdout (protocol "sinq_harness_v1"):
NORMALIZE parses and unparses source, VALIDATE_INPUT evaluates a bindings
literal with literal-only semantics, and RUN executes an entry point in a
freshly spawned child interpreter under a wall-clock limit, a memory cap,
and with its streams discarded. Hosts drive many of these workers in
parallel; each worker is single-threaded.
"""

PROTOCOL_VERSION = "sinq_harness_v1"

__version__ = "0.1.0"
