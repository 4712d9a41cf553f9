"""Execution plumbing: the runner wire protocol and outcome classification.

A runner is any subprocess speaking newline-delimited JSON on stdio: one
{"code", "timeout_s"} request line in, one {"outcome_raw", "wall_s",
"stderr_tail"} reply line out, in order. outcome_raw is negative for a
signal number, non-negative for an exit code. Keeping the client here (below
both the synthesizer and the campaign loop) lets either stage execute
candidates through the same contract.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import threading
from dataclasses import dataclass

logger = logging.getLogger(__name__)

# outcome classes
SEGV = "Segv"
FPE = "FPE"
ABORT = "Abort"
INTERNAL = "InternalFailure"
COMPILE = "CompileFailure"
TIMEOUT = "Timeout"
PASS = "Pass"
ERROR = "Error"

CRASH_OUTCOMES = frozenset({SEGV, FPE, ABORT, INTERNAL, COMPILE})

_SIGNAL_MAP = {11: SEGV, 8: FPE, 6: ABORT}

DEFAULT_INTERNAL_PATTERNS = ["Please report this bug"]
DEFAULT_COMPILE_PATTERNS = ["failed to compile", "compilation failed"]


class RunnerError(RuntimeError):
    """The runner process itself is misbehaving (not the code under test)."""


@dataclass(frozen=True)
class RawOutcome:
    outcome_raw: int  # negative = signal number, non-negative = exit code
    wall_s: float
    stderr_tail: str
    protocol_error: str = ""


def classify_outcome(
    raw: RawOutcome,
    timeout_s: float,
    internal_patterns: list[str] | None = None,
    compile_patterns: list[str] | None = None,
) -> tuple[str, int]:
    """Map a raw execution outcome to (outcome class, signal_or_code).

    Precedence: wall-clock cap, crash signals, clean exit, then stderr
    pattern promotion of nonzero exits; anything else is a plain Error.
    Halts without a recognized message stay Error - they are not bugs here.
    """
    internal_patterns = (
        DEFAULT_INTERNAL_PATTERNS if internal_patterns is None else internal_patterns
    )
    compile_patterns = DEFAULT_COMPILE_PATTERNS if compile_patterns is None else compile_patterns

    code = raw.outcome_raw
    if raw.protocol_error:
        return ERROR, code
    if raw.wall_s >= timeout_s:
        return TIMEOUT, code
    if code < 0:
        return _SIGNAL_MAP.get(-code, ERROR), code
    if code == 0:
        return PASS, 0
    if any(pattern in raw.stderr_tail for pattern in internal_patterns):
        return INTERNAL, code
    if any(pattern in raw.stderr_tail for pattern in compile_patterns):
        return COMPILE, code
    return ERROR, code


class RunnerClient:
    """Wire-protocol client around one runner subprocess.

    The runner is restarted if it dies; more than `max_restarts` deaths in a
    row means the runner itself is crash-looping and the campaign must stop.
    One client per worker - requests are serialized per runner instance.
    """

    def __init__(self, command: str | list[str], max_restarts: int = 3, grace_s: float = 10.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.max_restarts = max_restarts
        self.grace_s = grace_s
        self._proc: subprocess.Popen | None = None
        self._restarts = 0
        self._lock = threading.Lock()

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            if self._proc is not None:
                self._restarts += 1
                if self._restarts > self.max_restarts:
                    raise RunnerError(
                        f"runner died {self._restarts} times; giving up (cmd: {self.command})"
                    )
                logger.warning("runner died (restart %d), relaunching", self._restarts)
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        return self._proc

    def run(self, code: str, timeout_s: float) -> RawOutcome:
        with self._lock:
            proc = self._ensure_proc()
            request = json.dumps({"code": code, "timeout_s": timeout_s}) + "\n"
            try:
                proc.stdin.write(request)
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise RunnerError(f"runner pipe broke: {exc}") from exc
            if not line:
                # runner died mid-request; surface as an Error outcome and
                # let the next call attempt a restart
                self._proc = None
                self._restarts += 1
                if self._restarts > self.max_restarts:
                    raise RunnerError("runner crash-loop: no reply and restart budget spent")
                return RawOutcome(outcome_raw=1, wall_s=0.0, stderr_tail="", protocol_error="runner died")
            self._restarts = 0
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RunnerError(f"unparseable runner reply: {line!r}") from exc
        return RawOutcome(
            outcome_raw=int(reply.get("outcome_raw", 1)),
            wall_s=float(reply.get("wall_s", 0.0)),
            stderr_tail=str(reply.get("stderr_tail", "")),
            protocol_error=str(reply.get("protocol_error", "")),
        )

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=2)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class ScriptedExecutor:
    """Test double: classify code by rules instead of running it.

    `rules` is an ordered list of (predicate(code) -> bool, RawOutcome);
    the first matching rule wins, everything else exits cleanly.
    """

    def __init__(self, rules, default: RawOutcome | None = None):
        self.rules = list(rules)
        self.default = default or RawOutcome(outcome_raw=0, wall_s=0.01, stderr_tail="")
        self.calls: list[str] = []

    def run(self, code: str, timeout_s: float) -> RawOutcome:
        self.calls.append(code)
        for predicate, outcome in self.rules:
            if predicate(code):
                return outcome
        return self.default
