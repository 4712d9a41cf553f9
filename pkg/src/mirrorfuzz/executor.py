"""Fuzzing loop: mutate top candidates, execute, triage, feed bugs back.

Mutation is AST-level and seeded, so any mutant is replayable from (parent
test case, operator kind, seed). Crash-class outcomes append one bug record
per dedup key; hangs are reported but never recorded as bugs (they are noise
on numerical workloads).
"""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import logging
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING

from .ingest import SourceSnippet
from .recognizer import BugRecord
from .sandbox import (
    CRASH_OUTCOMES,
    TIMEOUT,
    RawOutcome,
    classify_outcome,
)
from .synthesizer import TestCase, rescore, select_top

if TYPE_CHECKING:
    from .store import Store

logger = logging.getLogger(__name__)

MUTATION_KINDS = ("boundary_value", "type_mutation", "shape_dim")

BOUNDARY_VALUES = (
    float("nan"),
    0,
    -1,
    2**31,
    -(2**31),
    2**63,
    -(2**63),
    1e308,
)

DEFAULT_DTYPES = (
    "float16",
    "float32",
    "float64",
    "int8",
    "int16",
    "int32",
    "int64",
    "uint8",
    "bool",
    "complex64",
)

_ADDRESS = re.compile(r"0x[0-9a-fA-F]+")
_LONG_HEX = re.compile(r"\b[0-9a-fA-F]{8,}\b")


@dataclass(frozen=True)
class MutationOp:
    kind: str
    seed: int

    def __post_init__(self):
        if self.kind not in MUTATION_KINDS:
            raise ValueError(f"unknown mutation kind {self.kind!r}")


@dataclass(frozen=True)
class MutationOutcome:
    case: TestCase
    changed: bool
    site: str = ""  # parameter name of the mutated site, when known


@dataclass(frozen=True)
class CrashReport:
    test_case: str
    outcome: str
    signal_or_code: int
    stderr_tail: str
    dedup_key: str
    target_api: str = ""
    framework: str = ""
    parent_case: str = ""  # lineage: parent + op kind + seed replay a mutant
    op_kind: str = ""
    mut_seed: int = -1

    def to_dict(self) -> dict:
        return {
            "test_case": self.test_case,
            "outcome": self.outcome,
            "signal_or_code": self.signal_or_code,
            "stderr_tail": self.stderr_tail,
            "dedup_key": self.dedup_key,
            "target_api": self.target_api,
            "framework": self.framework,
            "parent_case": self.parent_case,
            "op_kind": self.op_kind,
            "mut_seed": self.mut_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrashReport":
        return cls(
            test_case=data["test_case"],
            outcome=data["outcome"],
            signal_or_code=data.get("signal_or_code", 0),
            stderr_tail=data.get("stderr_tail", ""),
            dedup_key=data.get("dedup_key", ""),
            target_api=data.get("target_api", ""),
            framework=data.get("framework", ""),
            parent_case=data.get("parent_case", ""),
            op_kind=data.get("op_kind", ""),
            mut_seed=data.get("mut_seed", -1),
        )


def normalize_stderr_line(stderr: str) -> str:
    """First non-empty stderr line with addresses and long hex runs stripped."""
    for line in stderr.splitlines():
        line = line.strip()
        if line:
            line = _ADDRESS.sub("<addr>", line)
            return _LONG_HEX.sub("<hex>", line)
    return ""


def make_dedup_key(target_api: str, outcome: str, stderr: str) -> str:
    raw = f"{target_api}|{outcome}|{normalize_stderr_line(stderr)}"
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def triage(
    raw: RawOutcome,
    case: TestCase,
    timeout_s: float,
    internal_patterns: list[str] | None = None,
    compile_patterns: list[str] | None = None,
    parent_case: str = "",
    op_kind: str = "",
    mut_seed: int = -1,
) -> CrashReport:
    """Classify one execution and stamp it with its dedup key and lineage."""
    outcome, signal_or_code = classify_outcome(raw, timeout_s, internal_patterns, compile_patterns)
    return CrashReport(
        test_case=case.case_id,
        outcome=outcome,
        signal_or_code=signal_or_code,
        stderr_tail=raw.stderr_tail[-4096:],
        dedup_key=make_dedup_key(case.target_api, outcome, raw.stderr_tail),
        target_api=case.target_api,
        framework=case.framework,
        parent_case=parent_case,
        op_kind=op_kind,
        mut_seed=mut_seed,
    )


# -- mutation operators --------------------------------------------------------


def _is_number(node) -> bool:
    return (
        isinstance(node, ast.Constant)
        and isinstance(node.value, (int, float))
        and not isinstance(node.value, bool)
    )


def _boundary_sites(tree, params: tuple[str, ...]):
    preferred, fallback = [], []
    for node in ast.walk(tree):
        if not isinstance(node, ast.Call):
            continue
        for kw in node.keywords:
            if _is_number(kw.value):
                bucket = preferred if kw.arg in params else fallback
                bucket.append((kw.value, kw.arg or ""))
        for arg in node.args:
            if _is_number(arg):
                fallback.append((arg, ""))
    return preferred or fallback


def _dtype_sites(tree, dtypes: tuple[str, ...]):
    sites = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Attribute) and node.attr in dtypes:
            sites.append((node, "attr"))
        elif isinstance(node, ast.Constant) and isinstance(node.value, str) and node.value in dtypes:
            sites.append((node, "str"))
    return sites


def _shape_sites(tree):
    sites = []
    for node in ast.walk(tree):
        if isinstance(node, (ast.List, ast.Tuple)) and node.elts:
            if all(
                isinstance(e, ast.Constant) and isinstance(e.value, int) and not isinstance(e.value, bool)
                for e in node.elts
            ):
                sites.append(node)
    return sites


def mutate(
    tc: TestCase,
    op: MutationOp,
    params: tuple[str, ...] = (),
    dtypes: tuple[str, ...] = DEFAULT_DTYPES,
) -> MutationOutcome:
    """Apply one seeded operator; a mutant either differs from its parent in
    at least one token or comes back flagged as a no-op.

    boundary_value swaps a numeric literal argument (parameters of the API
    under test first) for a boundary value; type_mutation rewrites a
    dtype-like token; shape_dim perturbs an all-int list/tuple literal.
    Mutants that fail to re-parse are discarded (reported as no-ops).
    """
    rng = random.Random(op.seed)
    tree = ast.parse(tc.code)
    site_name = ""

    if op.kind == "boundary_value":
        sites = _boundary_sites(tree, params)
        if not sites:
            return MutationOutcome(case=tc, changed=False)
        node, site_name = rng.choice(sites)
        pool = [v for v in BOUNDARY_VALUES if repr(v) != repr(node.value)]
        node.value = rng.choice(pool)
    elif op.kind == "type_mutation":
        sites = _dtype_sites(tree, dtypes)
        if not sites:
            return MutationOutcome(case=tc, changed=False)
        node, which = rng.choice(sites)
        current = node.attr if which == "attr" else node.value
        pool = [d for d in dtypes if d != current]
        if not pool:
            return MutationOutcome(case=tc, changed=False)
        choice = rng.choice(pool)
        if which == "attr":
            node.attr = choice
        else:
            node.value = choice
    elif op.kind == "shape_dim":
        sites = _shape_sites(tree)
        if not sites:
            return MutationOutcome(case=tc, changed=False)
        node = rng.choice(sites)
        action = rng.choice(("negate", "zero", "grow", "shrink", "double"))
        idx = rng.randrange(len(node.elts))
        if action == "negate":
            node.elts[idx] = ast.Constant(-abs(node.elts[idx].value) - 1)
        elif action == "zero":
            node.elts[idx] = ast.Constant(0)
        elif action == "grow":
            node.elts.append(ast.Constant(copy.copy(node.elts[-1].value)))
        elif action == "shrink" and len(node.elts) > 1:
            del node.elts[idx]
        else:
            node.elts[idx] = ast.Constant(node.elts[idx].value * 2 + 1)

    ast.fix_missing_locations(tree)
    mutated_code = ast.unparse(tree)
    try:
        reparsed = ast.parse(mutated_code)
    except SyntaxError:
        return MutationOutcome(case=tc, changed=False)
    if ast.dump(reparsed) == ast.dump(ast.parse(tc.code)):
        return MutationOutcome(case=tc, changed=False)
    mutant = replace(tc, code=mutated_code, origin="mutated")
    return MutationOutcome(case=mutant, changed=True, site=site_name)


# -- campaign -------------------------------------------------------------------


@dataclass(frozen=True)
class Budget:
    seconds: float | None = None
    iterations: int | None = None

    def exhausted(self, iteration: int, elapsed: float) -> bool:
        if self.iterations is not None and iteration >= self.iterations:
            return True
        if self.seconds is not None and elapsed >= self.seconds:
            return True
        return False


def parse_budget(text: str) -> Budget:
    """"5h" / "30m" / "90s" are wall-clock budgets; a bare integer is iterations."""
    text = text.strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)([smh])", text)
    if m:
        scale = {"s": 1.0, "m": 60.0, "h": 3600.0}[m.group(2)]
        return Budget(seconds=float(m.group(1)) * scale)
    if re.fullmatch(r"\d+", text):
        return Budget(iterations=int(text))
    raise ValueError(f"cannot parse budget {text!r} (want e.g. 5h, 30m, 90s, or an iteration count)")


def _derive_seed(master: int, case_id: str, index: int) -> int:
    raw = f"{master}|{case_id}|{index}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


def _fuzzer_bug(case: TestCase, report: CrashReport, site: str) -> BugRecord:
    cause = f"fuzzer-found {report.outcome}: {normalize_stderr_line(report.stderr_tail)}"
    return BugRecord(
        framework=case.framework,
        buggy_api=case.target_api,
        trigger_params=(site,) if site else ("unknown",),
        root_cause=cause[:512],
        snippet=SourceSnippet(text=case.code, origin="fenced_block", parses=True),
        issue_id=report.dedup_key,  # crash dedup key stands in for an issue id
        verified=True,  # observed directly, no model opinion involved
        source="fuzzer_found",
    )


def run_campaign(
    pool: list[TestCase],
    budget: Budget,
    executor,
    store: "Store | None" = None,
    workers: int = 1,
    quota: int = 20,
    top_n: int = 10,
    timeout_s: float = 30.0,
    seed: int = 0,
    api_params: dict[str, tuple[str, ...]] | None = None,
    internal_patterns: list[str] | None = None,
    compile_patterns: list[str] | None = None,
    dtypes: tuple[str, ...] = DEFAULT_DTYPES,
) -> list[CrashReport]:
    """Mutation/execution loop over the highest-priority pool entries.

    Per iteration each selected case is executed once (re-measuring C) and
    then mutated up to `quota` times. Crash-class outcomes emit one report
    and one fuzzer_found bug record per new dedup key; later duplicates are
    counted but not re-emitted, so report streams stay stable. Everything is
    derived from `seed`, making the whole report sequence reproducible.
    """
    api_params = api_params or {}
    pool = list(pool)
    reports: list[CrashReport] = []
    seen_keys: set[str] = set()
    duplicates = 0
    noops = 0
    start = time.monotonic()
    iteration = 0

    while not budget.exhausted(iteration, time.monotonic() - start):
        top = select_top(pool, top_n)
        if not top:
            break
        jobs: list[tuple[TestCase, str, str, int, str]] = []
        for case in top:
            jobs.append((case, "", "", -1, ""))
            params = api_params.get(case.target_api, ())
            for i in range(quota):
                job_rng = random.Random(_derive_seed(seed, case.case_id, i))
                kind = job_rng.choice(MUTATION_KINDS)
                op = MutationOp(kind=kind, seed=job_rng.getrandbits(64))
                outcome = mutate(case, op, params=params, dtypes=dtypes)
                if not outcome.changed:
                    noops += 1
                    continue
                jobs.append((outcome.case, case.case_id, op.kind, op.seed, outcome.site))

        def _dispatch(job):
            return executor.run(job[0].code, timeout_s)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as tpe:
                raw_outcomes = list(tpe.map(_dispatch, jobs))
        else:
            raw_outcomes = [_dispatch(job) for job in jobs]

        rescored: dict[str, TestCase] = {}
        for (case, parent, op_kind, mut_seed, site), raw in zip(jobs, raw_outcomes):
            report = triage(
                raw,
                case,
                timeout_s,
                internal_patterns,
                compile_patterns,
                parent_case=parent,
                op_kind=op_kind,
                mut_seed=mut_seed,
            )
            if not parent and report.outcome != TIMEOUT:
                rescored[case.case_id] = rescore(case, raw.wall_s, timeout_s)
            if report.outcome in CRASH_OUTCOMES:
                if report.dedup_key in seen_keys:
                    duplicates += 1
                    continue
                seen_keys.add(report.dedup_key)
                reports.append(report)
                if store is not None:
                    store.update_bugs(_fuzzer_bug(case, report, site))
                    store.add_crash(report)
            else:
                reports.append(report)
                if store is not None:
                    store.add_crash(report)

        pool = [rescored.get(tc.case_id, tc) for tc in pool]
        iteration += 1

    logger.info(
        "campaign done: %d reports, %d duplicate crashes, %d no-op mutants",
        len(reports),
        duplicates,
        noops,
    )
    return reports


# -- reporting -------------------------------------------------------------------


def crash_table(reports: list[CrashReport]) -> str:
    """Per-framework bug counts by type; Other folds internal + compile failures."""
    rows: dict[str, dict[str, int]] = {}
    for report in reports:
        if report.outcome not in CRASH_OUTCOMES:
            continue
        framework = report.framework or report.target_api.split(".", 1)[0]
        row = rows.setdefault(framework, {"Total": 0, "Segv": 0, "FPE": 0, "Abort": 0, "Other": 0})
        row["Total"] += 1
        if report.outcome in ("Segv", "FPE", "Abort"):
            row[report.outcome] += 1
        else:
            row["Other"] += 1

    header = f"{'Framework':<20}{'Total':>7}{'Segv':>7}{'FPE':>7}{'Abort':>7}{'Other':>7}"
    lines = [header]
    total = {"Total": 0, "Segv": 0, "FPE": 0, "Abort": 0, "Other": 0}
    for framework in sorted(rows):
        row = rows[framework]
        for key in total:
            total[key] += row[key]
        lines.append(
            f"{framework:<20}{row['Total']:>7}{row['Segv']:>7}{row['FPE']:>7}"
            f"{row['Abort']:>7}{row['Other']:>7}"
        )
    lines.append(
        f"{'Total':<20}{total['Total']:>7}{total['Segv']:>7}{total['FPE']:>7}"
        f"{total['Abort']:>7}{total['Other']:>7}"
    )
    return "\n".join(lines)


def save_reports(reports: list[CrashReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")


def load_reports(path: str | Path) -> list[CrashReport]:
    reports = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            reports.append(CrashReport.from_dict(json.loads(line)))
    return reports
