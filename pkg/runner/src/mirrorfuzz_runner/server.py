"""Untrusted-code runner: fresh resource-limited subprocess per request.

Wire protocol (newline-delimited JSON over stdio, one reply per request, in
order): {"code": str, "timeout_s": num} in, {"outcome_raw": int, "wall_s":
num, "stderr_tail": str} out. outcome_raw is negative for a signal number
and non-negative for an exit code. A request that cannot be parsed gets a
reply carrying a "protocol_error" marker, and serving continues; nothing
the child does can bring the runner itself down.

Each request runs `python -c <code>` in a new session (its own process
group) with an address-space cap and no core dumps; on timeout the whole
group is SIGKILLed. Serving is sequential by design: parallelism comes from
launching several runner instances.
"""

from __future__ import annotations

import argparse
import json
import resource
import signal
import subprocess
import sys
import time

STDERR_TAIL_BYTES = 4096
DEFAULT_MEM_LIMIT_MB = 4096
DEFAULT_GRACE_S = 5.0


def _child_limits(mem_limit_mb: int):
    def apply() -> None:
        limit = mem_limit_mb * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))

    return apply


def run_code(
    code: str,
    timeout_s: float,
    mem_limit_mb: int = DEFAULT_MEM_LIMIT_MB,
    python: str | None = None,
    grace_s: float = DEFAULT_GRACE_S,
) -> dict:
    """Execute one program in a fresh interpreter subprocess.

    Returns the reply dict. wall_s never exceeds timeout_s + grace_s; a
    timed-out child is killed as a whole process group so grandchildren die
    with it.
    """
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            [python or sys.executable, "-c", code],
            stdin=subprocess.DEVNULL,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.PIPE,
            start_new_session=True,
            preexec_fn=_child_limits(mem_limit_mb),
        )
    except OSError as exc:
        return {
            "outcome_raw": 1,
            "wall_s": 0.0,
            "stderr_tail": f"spawn failed: {exc}"[-STDERR_TAIL_BYTES:],
        }

    timed_out = False
    try:
        _, stderr = proc.communicate(timeout=timeout_s)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_group(proc)
        try:
            _, stderr = proc.communicate(timeout=grace_s)
        except subprocess.TimeoutExpired:
            proc.kill()
            stderr = b""
    wall = time.monotonic() - started
    if timed_out:
        # the client classifies by the wall cap; keep it in [timeout, timeout+grace]
        wall = min(max(wall, timeout_s), timeout_s + grace_s)

    tail = (stderr or b"")[-STDERR_TAIL_BYTES:].decode("utf-8", errors="replace")
    return {"outcome_raw": proc.returncode, "wall_s": round(wall, 6), "stderr_tail": tail}


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        import os

        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            proc.kill()
        except ProcessLookupError:
            pass


def _protocol_error(message: str) -> dict:
    return {"outcome_raw": 0, "wall_s": 0.0, "stderr_tail": "", "protocol_error": message}


def serve(
    stdin=None,
    stdout=None,
    mem_limit_mb: int = DEFAULT_MEM_LIMIT_MB,
    python: str | None = None,
    grace_s: float = DEFAULT_GRACE_S,
) -> None:
    """Request loop: one reply line per request line, emitted in order."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            code = request["code"]
            timeout_s = float(request.get("timeout_s", 30.0))
            if not isinstance(code, str) or not code:
                raise ValueError("code must be a non-empty string")
            if timeout_s <= 0:
                raise ValueError("timeout_s must be positive")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            reply = _protocol_error(str(exc))
        else:
            reply = run_code(code, timeout_s, mem_limit_mb, python, grace_s)
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def entrypoint() -> None:
    parser = argparse.ArgumentParser(prog="mirrorfuzz-runner", description=__doc__)
    parser.add_argument("--mem-limit-mb", type=int, default=DEFAULT_MEM_LIMIT_MB)
    parser.add_argument("--python", default=None, help="interpreter for child processes")
    parser.add_argument("--grace-s", type=float, default=DEFAULT_GRACE_S)
    args = parser.parse_args()
    serve(mem_limit_mb=args.mem_limit_mb, python=args.python, grace_s=args.grace_s)


if __name__ == "__main__":
    entrypoint()
