"""Secondary acceptance: the real sandbox runner behind the triage oracle.

These tests integrate the runner package through its wire protocol, exactly
as a fuzzing campaign would. They skip when the runner package is not in
the tree, so the primary suite stands alone.
"""

from __future__ import annotations

import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from mirrorfuzz.sandbox import RunnerClient, classify_outcome
from mirrorfuzz.executor import triage
from mirrorfuzz.synthesizer import TestCase

RUNNER_SERVER = Path(__file__).resolve().parents[1] / "runner" / "src" / "mirrorfuzz_runner" / "server.py"

pytestmark = pytest.mark.skipif(
    not RUNNER_SERVER.exists(), reason="sandbox runner package not built"
)


def _case(code: str) -> TestCase:
    return TestCase(code=code, target_api="toy.api", lineage=("", ""), G=1, U=1,
                    C=0.1, priority=0.9, origin="synthesized", framework="toy")


@pytest.fixture()
def runner_client():
    client = RunnerClient([sys.executable, str(RUNNER_SERVER)])
    yield client
    client.close()


@pytest.fixture(scope="module")
def divzero_binary(tmp_path_factory) -> str | None:
    cc = shutil.which("cc") or shutil.which("gcc")
    if cc is None:
        return None
    src = tmp_path_factory.mktemp("crashers") / "divzero.c"
    src.write_text("int main(void) { volatile int zero = 0; return 1 / zero; }\n")
    binary = src.with_suffix("")
    if subprocess.run([cc, "-O0", "-o", str(binary), str(src)], capture_output=True).returncode:
        return None
    return str(binary)


def test_sandbox_triage_classifies_planted_targets(runner_client, divzero_binary):
    """Pass/Segv/FPE/Abort/Timeout on the five planted targets, 5/5, twice."""
    if divzero_binary is None:
        pytest.skip("no C compiler available to build the planted crasher")
    targets = [
        ("pass", 10.0, "Pass"),
        ("import ctypes; ctypes.string_at(0)", 10.0, "Segv"),
        (f"import os; os.execv({divzero_binary!r}, [{divzero_binary!r}])", 10.0, "FPE"),
        ("import os; os.abort()", 10.0, "Abort"),
        ("while True: pass", 1.0, "Timeout"),
    ]
    for attempt in range(2):  # two consecutive runs must agree
        classified = []
        for code, timeout_s, expected in targets:
            raw = runner_client.run(code, timeout_s)
            report = triage(raw, _case(code), timeout_s)
            classified.append(report.outcome == expected)
        assert all(classified), f"run {attempt}: {classified}"
    print("\nACCEPTANCE sandbox-triage (5/5 planted targets, two runs): PASS")


def test_report_this_bug_message_maps_to_internal_failure(runner_client):
    code = (
        "import sys\n"
        "sys.stderr.write('Please report this bug to the relevant platform/organization.\\n')\n"
        "sys.exit(1)\n"
    )
    raw = runner_client.run(code, 10.0)
    assert triage(raw, _case(code), 10.0).outcome == "InternalFailure"
    print("ACCEPTANCE internal-failure pattern promotion: PASS")


def test_isolation_fresh_process_and_crash_survival(runner_client):
    """Global-state leak check plus survival of 100 crashing requests."""
    assert classify_outcome(runner_client.run("SHARED_STATE = 1", 10.0), 10.0)[0] == "Pass"
    leaked = runner_client.run("print(SHARED_STATE)", 10.0)
    assert classify_outcome(leaked, 10.0)[0] == "Error"
    assert "NameError" in leaked.stderr_tail

    for _ in range(100):
        raw = runner_client.run("import ctypes; ctypes.string_at(0)", 15.0)
        assert classify_outcome(raw, 15.0)[0] == "Segv"
    assert classify_outcome(runner_client.run("pass", 10.0), 10.0)[0] == "Pass"
    print("ACCEPTANCE isolation (state leak + 100 crashers): PASS")
