"""RunnerClient wire behaviour against the scripted runner fixture."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from mirrorfuzz.sandbox import RunnerClient, RunnerError, classify_outcome

MOCK_RUNNER = Path(__file__).parent / "fixtures" / "mock_runner.py"


def _client() -> RunnerClient:
    return RunnerClient([sys.executable, str(MOCK_RUNNER)])


def test_round_trip_pass_and_crash():
    with _client() as client:
        ok = client.run("x = 1", 30.0)
        assert ok.outcome_raw == 0
        assert classify_outcome(ok, 30.0)[0] == "Pass"
        crash = client.run("betaflow.nn.avg_pool3d(x, stride=0)", 30.0)
        assert crash.outcome_raw == -11
        assert classify_outcome(crash, 30.0)[0] == "Segv"


def test_requests_are_serialized_and_ordered():
    with _client() as client:
        outcomes = [client.run(f"x = {i}", 30.0).outcome_raw for i in range(10)]
    assert outcomes == [0] * 10


def test_string_command_is_shlex_split():
    client = RunnerClient(f"{sys.executable} {MOCK_RUNNER}")
    try:
        assert client.run("x = 1", 30.0).outcome_raw == 0
    finally:
        client.close()


def test_crash_looping_runner_aborts_with_diagnostic():
    # a "runner" that dies immediately on every launch
    client = RunnerClient([sys.executable, "-c", "import sys; sys.exit(1)"], max_restarts=2)
    try:
        with pytest.raises(RunnerError):
            for _ in range(10):
                client.run("x = 1", 5.0)
    finally:
        client.close()


def test_close_is_idempotent():
    client = _client()
    client.run("x = 1", 30.0)
    client.close()
    client.close()
